#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "drawq/drawsim.hpp"
#include "drawq/errors.hpp"

namespace drawq {

/// Noise-free terminal reward of every (action trajectory, friction bin)
/// pair. Rows enumerate trajectories lexicographically with the first
/// action as the most significant digit.
struct RewardMatrix {
    int horizon = 0;
    int action_count = 0;
    Eigen::MatrixXd values;  // trajectories x friction bins

    long trajectory_count() const { return static_cast<long>(values.rows()); }
    int bins() const { return static_cast<int>(values.cols()); }
};

/// Lexicographic row index -> action indices.
inline std::vector<int> trajectory_from_row(long row, int horizon, int action_count) {
    std::vector<int> traj(static_cast<std::size_t>(horizon));
    for (int t = horizon - 1; t >= 0; --t) {
        traj[static_cast<std::size_t>(t)] = static_cast<int>(row % action_count);
        row /= action_count;
    }
    return traj;
}

inline long row_from_trajectory(const std::vector<int>& traj, int action_count) {
    long row = 0;
    for (int a : traj) row = row * action_count + a;
    return row;
}

/// Full search over the trajectory space: one deterministic episode per
/// matrix cell. Prefix states are shared along the depth-first walk, so the
/// work is linear in the tree size rather than horizon * cells.
inline RewardMatrix enumerate_rewards(const EnvironmentConfig& env_cfg, const Calibration& cal) {
    EnvironmentConfig cfg = env_cfg;
    cfg.noise = false;
    cfg.validate();
    cal.validate();
    const int T = cfg.horizon;
    const int A = cfg.action_count();
    long n_traj = 1;
    for (int t = 0; t < T; ++t) n_traj *= A;

    RewardMatrix mat;
    mat.horizon = T;
    mat.action_count = A;
    mat.values.resize(n_traj, cfg.friction.bins);

    std::vector<double> fn(static_cast<std::size_t>(A));
    for (int a = 0; a < A; ++a) fn[static_cast<std::size_t>(a)] = cfg.action_norm(a);

    for (int k = 0; k < cfg.friction.bins; ++k) {
        const double m = cfg.friction.normalized(k);
        long row = 0;
        auto walk = [&](auto&& self, const LatentState& s, int depth) -> void {
            if (depth == T) {
                mat.values(row++, k) = cal.reward(terminal_costs(s, cfg));
                return;
            }
            for (int a = 0; a < A; ++a)
                self(self, step(s, fn[static_cast<std::size_t>(a)], m, cfg), depth + 1);
        };
        walk(walk, LatentState{}, 0);
    }
    return mat;
}

/// Best open-loop trajectory at the nominal friction bin (0-based), the
/// non-adaptive reference controller. Ties break to the lowest row.
inline std::vector<int> baseline_trajectory(const RewardMatrix& mat, int nominal_bin = 1) {
    if (nominal_bin < 0 || nominal_bin >= mat.bins())
        throw contract_error("baseline_trajectory: bin out of range");
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < mat.values.rows(); ++r)
        if (mat.values(r, nominal_bin) > mat.values(best, nominal_bin)) best = r;
    return trajectory_from_row(static_cast<long>(best), mat.horizon, mat.action_count);
}

/// Expected reward of one fixed trajectory under the friction distribution.
inline double expected_baseline(const RewardMatrix& mat, const std::vector<double>& masses,
                                const std::vector<int>& trajectory) {
    if (static_cast<int>(masses.size()) != mat.bins())
        throw contract_error("expected_baseline: masses/bins mismatch");
    const long row = row_from_trajectory(trajectory, mat.action_count);
    double v = 0.0;
    for (int k = 0; k < mat.bins(); ++k)
        v += masses[static_cast<std::size_t>(k)] * mat.values(row, k);
    return v;
}

/// Exact optimum of the open-loop controller: best single trajectory in
/// expectation over friction.
inline double v_blind(const RewardMatrix& mat, const std::vector<double>& masses) {
    if (static_cast<int>(masses.size()) != mat.bins())
        throw contract_error("v_blind: masses/bins mismatch");
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < mat.values.rows(); ++r) {
        double v = 0.0;
        for (int k = 0; k < mat.bins(); ++k)
            v += masses[static_cast<std::size_t>(k)] * mat.values(r, k);
        best = std::max(best, v);
    }
    return best;
}

/// Exact optimum of a friction-observing controller: per-bin best
/// trajectory, weighted by the bin masses.
inline double v_full(const RewardMatrix& mat, const std::vector<double>& masses) {
    if (static_cast<int>(masses.size()) != mat.bins())
        throw contract_error("v_full: masses/bins mismatch");
    double v = 0.0;
    for (int k = 0; k < mat.bins(); ++k)
        v += masses[static_cast<std::size_t>(k)] * mat.values.col(k).maxCoeff();
    return v;
}

/// Backward induction over the deterministic per-bin tree:
/// V_T = R, V_t = max_a gamma * V_{t+1}(step). An independent route to the
/// per-column optimum of the reward matrix (exact for gamma = 1).
inline double dp_value(const EnvironmentConfig& env_cfg, const Calibration& cal, int friction_bin,
                       double gamma = 1.0) {
    EnvironmentConfig cfg = env_cfg;
    cfg.noise = false;
    cfg.validate();
    if (friction_bin < 0 || friction_bin >= cfg.friction.bins)
        throw contract_error("dp_value: friction bin out of range");
    const double m = cfg.friction.normalized(friction_bin);
    const int T = cfg.horizon;
    const int A = cfg.action_count();
    auto value = [&](auto&& self, const LatentState& s, int t) -> double {
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < A; ++a) {
            const LatentState n = step(s, cfg.action_norm(a), m, cfg);
            const double v = t == T - 1 ? cal.reward(terminal_costs(n, cfg))
                                        : gamma * self(self, n, t + 1);
            best = std::max(best, v);
        }
        return best;
    };
    return value(value, LatentState{}, 0);
}

struct OracleSummary {
    std::vector<int> baseline;
    double expected_baseline = 0.0;
    double v_blind = 0.0;
    double v_full = 0.0;
};

inline OracleSummary oracle_summary(const RewardMatrix& mat, const std::vector<double>& masses,
                                    int nominal_bin = 1) {
    OracleSummary s;
    s.baseline = baseline_trajectory(mat, nominal_bin);
    s.expected_baseline = expected_baseline(mat, masses, s.baseline);
    s.v_blind = v_blind(mat, masses);
    s.v_full = v_full(mat, masses);
    return s;
}

namespace detail {
inline std::string join_trajectory(const std::vector<int>& traj) {
    std::string s;
    for (std::size_t i = 0; i < traj.size(); ++i) {
        if (i) s += '-';
        s += std::to_string(traj[i]);
    }
    return s;
}
}  // namespace detail

inline void save_oracle_summary_csv(const OracleSummary& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw config_error("save_oracle_summary_csv: cannot open " + path);
    out << "key,value\n";
    out << "baseline_trajectory," << detail::join_trajectory(s.baseline) << '\n';
    out << "expected_baseline," << detail::format_full(s.expected_baseline) << '\n';
    out << "v_blind," << detail::format_full(s.v_blind) << '\n';
    out << "v_full," << detail::format_full(s.v_full) << '\n';
    if (!out) throw config_error("save_oracle_summary_csv: write failed for " + path);
}

inline void save_reward_matrix_csv(const RewardMatrix& mat, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw config_error("save_reward_matrix_csv: cannot open " + path);
    out << "trajectory";
    for (int k = 0; k < mat.bins(); ++k) out << ",bin_" << k + 1;
    out << '\n';
    for (Eigen::Index r = 0; r < mat.values.rows(); ++r) {
        out << detail::join_trajectory(
            trajectory_from_row(static_cast<long>(r), mat.horizon, mat.action_count));
        for (int k = 0; k < mat.bins(); ++k) out << ',' << detail::format_full(mat.values(r, k));
        out << '\n';
    }
    if (!out) throw config_error("save_reward_matrix_csv: write failed for " + path);
}

}  // namespace drawq
