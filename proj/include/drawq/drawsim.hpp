#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "drawq/errors.hpp"
#include "drawq/rng.hpp"

namespace drawq {

using Observation = std::array<double, 3>;
using CostTerms = std::array<double, 3>;

/// Per-episode contact friction, Beta-distributed and discretized into
/// equal-size bins. Bin k (0-based) is represented by its right edge
/// scale*(k+1)/bins; normalized friction is the representative divided
/// by the scale, i.e. (k+1)/bins.
struct FrictionDistribution {
    double alpha = 1.75;
    double beta = 5.0;
    double scale = 0.14;
    int bins = 10;

    double value(int bin) const { return scale * static_cast<double>(bin + 1) / bins; }
    double normalized(int bin) const { return static_cast<double>(bin + 1) / bins; }
};

/// Bin probabilities p_k = I(k/bins) - I((k-1)/bins) with I the regularized
/// incomplete beta function. Sums to 1 by construction.
inline std::vector<double> friction_masses(const FrictionDistribution& dist) {
    if (dist.bins < 1 || dist.alpha <= 0.0 || dist.beta <= 0.0 || dist.scale <= 0.0)
        throw config_error("friction_masses: invalid distribution parameters");
    std::vector<double> p(dist.bins);
    double prev = 0.0;
    for (int k = 0; k < dist.bins; ++k) {
        const double hi = static_cast<double>(k + 1) / dist.bins;
        const double cdf = boost::math::ibeta(dist.alpha, dist.beta, hi);
        p[k] = cdf - prev;
        prev = cdf;
    }
    return p;
}

/// Latent plant state. sigma is an accumulated stress proxy, thickness a
/// wall-thickness proxy (starts at 1 and only shrinks), drawin the
/// cumulative draw-in proxy. Not observable by the agent.
struct LatentState {
    double sigma = 0.0;
    double thickness = 1.0;
    double drawin = 0.0;
    int t = 0;
};

/// All surrogate-plant constants. Defaults are the evaluation setting:
/// five control steps, seven force levels, Beta(1.75, 5) friction over
/// [0, 0.14] in 10 bins, observation noise on.
struct EnvironmentConfig {
    int horizon = 5;
    std::vector<double> actions_kn = {20, 40, 60, 80, 100, 120, 140};
    double max_force_kn = 140.0;
    FrictionDistribution friction{};

    // latent dynamics
    double stress_force_gain = 1.0;      // on f*(1+m)
    double stress_wrinkle_gain = 1.5;    // on (1-f)^2*(2-m)
    double thinning_rate = 0.04;
    double thinning_friction_offset = 0.5;
    double drawin_rate = 0.2;
    double drawin_force_relief = 0.5;
    double drawin_friction_relief = 0.4;

    // observables: stamp force, blank infeed, blank-holder offset
    double stamp_scale = 50.0;
    double stamp_friction_gain = 0.8;
    double offset_scale = 0.05;
    double offset_friction_gain = 0.2;
    std::array<double, 3> obs_range = {90.0, 1.0, 0.06};
    std::array<double, 3> noise_std = {0.9, 0.005, 0.0006};  // 1%, 0.5%, 1% of range
    bool noise = true;

    int action_count() const { return static_cast<int>(actions_kn.size()); }

    /// Normalized force f = u / u_max in (0, 1].
    double action_norm(int action_index) const {
        if (action_index < 0 || action_index >= action_count())
            throw contract_error("action_norm: action index out of range");
        return actions_kn[static_cast<std::size_t>(action_index)] / max_force_kn;
    }

    void validate() const {
        if (horizon < 1) throw config_error("EnvironmentConfig: horizon must be >= 1");
        if (actions_kn.empty()) throw config_error("EnvironmentConfig: empty action set");
        for (double u : actions_kn)
            if (u <= 0.0 || u > max_force_kn)
                throw config_error("EnvironmentConfig: action force outside (0, u_max]");
        for (double r : obs_range)
            if (r <= 0.0) throw config_error("EnvironmentConfig: non-positive observable range");
    }
};

namespace detail {
inline void check_step_domain(double f, double m) {
    constexpr double tol = 1e-12;
    if (!(f > 0.0 && f <= 1.0 + tol) || !(m >= 0.0 && m <= 1.0 + tol))
        throw contract_error("drawsim: normalized force/friction outside domain");
}
}  // namespace detail

/// One control step of the latent dynamics. High force drives stress and
/// thinning; low force drives wrinkling-type stress and draw-in. Stress and
/// draw-in are non-decreasing, thickness non-increasing.
inline LatentState step(const LatentState& s, double f, double m, const EnvironmentConfig& cfg) {
    detail::check_step_domain(f, m);
    LatentState n;
    n.sigma = s.sigma + cfg.stress_force_gain * f * (1.0 + m) +
              cfg.stress_wrinkle_gain * (1.0 - f) * (1.0 - f) * (2.0 - m);
    n.thickness = s.thickness - cfg.thinning_rate * f * (cfg.thinning_friction_offset + m);
    n.drawin = s.drawin + cfg.drawin_rate * (1.0 - cfg.drawin_force_relief * f) *
                              (1.0 - cfg.drawin_friction_relief * m);
    n.t = s.t + 1;
    return n;
}

/// Noise-free observables for the state reached after applying force f at
/// step t (0-based). Additive Gaussian noise is drawn from noise_rng when
/// the config enables it and a stream is supplied.
inline Observation observe(const LatentState& after, double f, double m, int t,
                           const EnvironmentConfig& cfg, RngStream* noise_rng = nullptr) {
    detail::check_step_domain(f, m);
    Observation o;
    o[0] = cfg.stamp_scale * (static_cast<double>(t + 1) / cfg.horizon) *
           (1.0 + cfg.stamp_friction_gain * m) * (0.5 + 0.5 * f);
    o[1] = after.drawin;
    o[2] = cfg.offset_scale * f * (1.0 + cfg.offset_friction_gain * m);
    if (cfg.noise && noise_rng != nullptr)
        for (int i = 0; i < 3; ++i) o[i] += cfg.noise_std[static_cast<std::size_t>(i)] * noise_rng->normal();
    return o;
}

/// Terminal cost terms: accumulated stress, negated wall thickness
/// (thicker wall = lower cost) and cumulative draw-in.
inline CostTerms terminal_costs(const LatentState& s, const EnvironmentConfig& cfg) {
    if (s.t != cfg.horizon)
        throw contract_error("terminal_costs: called before the final control step");
    return {s.sigma, -s.thickness, s.drawin};
}

/// Affine cost-to-reward scaling: 10 at the calibrated minimum, 0 at the
/// maximum. Out-of-calibration costs map outside [0, 10] on purpose.
inline double scale_term(double c, double cmin, double cmax) {
    if (!(cmax > cmin)) throw config_error("scale_term: degenerate calibration (cmax <= cmin)");
    return 10.0 * (1.0 - (c - cmin) / (cmax - cmin));
}

/// Weighted harmonic mean of the scaled terms if all are strictly positive,
/// 0 otherwise (the continuous limit as any term reaches 0).
inline double combine_reward(const std::array<double, 3>& terms,
                             const std::array<double, 3>& weights) {
    double wsum = 0.0, denom = 0.0;
    for (int i = 0; i < 3; ++i) {
        const auto j = static_cast<std::size_t>(i);
        if (!(weights[j] > 0.0)) throw config_error("combine_reward: weights must be positive");
        if (terms[j] <= 0.0) return 0.0;
        wsum += weights[j];
        denom += weights[j] / terms[j];
    }
    return wsum / denom;
}

/// Empirical per-term extrema and harmonic-mean weights shared by training,
/// evaluation and the oracle so that all rewards live on one scale.
struct Calibration {
    CostTerms cmin{};
    CostTerms cmax{};
    std::array<double, 3> weights = {1.0, 1.0, 1.0};

    static constexpr std::array<const char*, 3> term_names = {"stress", "thinning", "drawin"};

    void validate() const {
        for (int i = 0; i < 3; ++i) {
            const auto j = static_cast<std::size_t>(i);
            if (!(cmax[j] > cmin[j]))
                throw config_error(std::string("Calibration: degenerate extrema for term ") +
                                   term_names[j]);
            if (!(weights[j] > 0.0))
                throw config_error(std::string("Calibration: non-positive weight for term ") +
                                   term_names[j]);
        }
    }

    double reward(const CostTerms& costs) const {
        std::array<double, 3> scaled;
        for (std::size_t i = 0; i < 3; ++i)
            scaled[i] = scale_term(costs[i], cmin[i], cmax[i]);
        return combine_reward(scaled, weights);
    }
};

/// Terminal reward of a finished episode under the given calibration.
inline double terminal_reward(const LatentState& s, const EnvironmentConfig& cfg,
                              const Calibration& cal) {
    return cal.reward(terminal_costs(s, cfg));
}

namespace detail {

inline std::string format_full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline int sample_discrete(const std::vector<double>& masses, RngStream& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t k = 0; k < masses.size(); ++k) {
        acc += masses[k];
        if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(masses.size()) - 1;  // guards rounding at u ~ 1
}

}  // namespace detail

/// Runs n noise-free episodes with uniformly random trajectories and
/// friction drawn from the bin distribution, recording min/max per cost
/// term. Weights are left at their defaults.
inline Calibration calibrate_extrema(const EnvironmentConfig& cfg, int n, RngStream rng) {
    if (n < 2) throw contract_error("calibrate_extrema: need at least 2 samples");
    cfg.validate();
    const auto masses = friction_masses(cfg.friction);
    Calibration cal;
    cal.cmin.fill(std::numeric_limits<double>::infinity());
    cal.cmax.fill(-std::numeric_limits<double>::infinity());
    for (int i = 0; i < n; ++i) {
        const int bin = detail::sample_discrete(masses, rng);
        const double m = cfg.friction.normalized(bin);
        LatentState s;
        for (int t = 0; t < cfg.horizon; ++t)
            s = step(s, cfg.action_norm(rng.uniform_int(cfg.action_count())), m, cfg);
        const CostTerms c = terminal_costs(s, cfg);
        for (std::size_t j = 0; j < 3; ++j) {
            cal.cmin[j] = std::min(cal.cmin[j], c[j]);
            cal.cmax[j] = std::max(cal.cmax[j], c[j]);
        }
    }
    for (std::size_t j = 0; j < 3; ++j)
        if (!(cal.cmax[j] > cal.cmin[j]))
            throw numerical_error(std::string("calibrate_extrema: degenerate extrema for term ") +
                                  Calibration::term_names[j]);
    return cal;
}

/// Key=value text persistence so that train, evaluate and oracle runs share
/// identical reward scaling. Values round-trip at full precision.
inline void save_calibration(const Calibration& cal, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw config_error("save_calibration: cannot open " + path);
    for (std::size_t i = 0; i < 3; ++i) {
        const std::string name = Calibration::term_names[i];
        out << name << ".min=" << detail::format_full(cal.cmin[i]) << '\n';
        out << name << ".max=" << detail::format_full(cal.cmax[i]) << '\n';
        out << name << ".weight=" << detail::format_full(cal.weights[i]) << '\n';
    }
    if (!out) throw config_error("save_calibration: write failed for " + path);
}

inline Calibration load_calibration(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("load_calibration: cannot open " + path);
    Calibration cal;
    std::array<bool, 9> seen{};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("load_calibration: malformed line " + std::to_string(lineno));
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        std::size_t term = 3, field = 3;
        for (std::size_t i = 0; i < 3; ++i) {
            const std::string name = Calibration::term_names[i];
            if (key == name + ".min") { term = i; field = 0; }
            if (key == name + ".max") { term = i; field = 1; }
            if (key == name + ".weight") { term = i; field = 2; }
        }
        if (term == 3)
            throw config_error("load_calibration: unknown key '" + key + "' at line " +
                               std::to_string(lineno));
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(val, &pos);
        } catch (const std::exception&) {
            throw config_error("load_calibration: bad value at line " + std::to_string(lineno));
        }
        if (pos != val.size())
            throw config_error("load_calibration: bad value at line " + std::to_string(lineno));
        if (field == 0) cal.cmin[term] = v;
        if (field == 1) cal.cmax[term] = v;
        if (field == 2) cal.weights[term] = v;
        seen[term * 3 + field] = true;
    }
    for (bool s : seen)
        if (!s) throw config_error("load_calibration: missing keys in " + path);
    cal.validate();
    return cal;
}

/// Stateful episode-facing plant. Owns its friction and observation-noise
/// streams; one instance drives one episode at a time.
class Environment {
public:
    Environment(EnvironmentConfig cfg, Calibration cal, RngStream friction_rng,
                RngStream noise_rng)
        : cfg_(std::move(cfg)),
          cal_(cal),
          masses_(friction_masses(cfg_.friction)),
          friction_rng_(std::move(friction_rng)),
          noise_rng_(std::move(noise_rng)) {
        cfg_.validate();
        cal_.validate();
    }

    /// Fresh episode with friction sampled from the bin distribution.
    void reset() { reset(detail::sample_discrete(masses_, friction_rng_)); }

    /// Fresh episode with a pinned friction bin (oracle and evaluation use).
    void reset(int friction_bin) {
        if (friction_bin < 0 || friction_bin >= cfg_.friction.bins)
            throw contract_error("Environment::reset: friction bin out of range");
        bin_ = friction_bin;
        state_ = LatentState{};
    }

    /// Applies one control action; returns the (possibly noisy) observation.
    Observation apply(int action_index) {
        if (bin_ < 0) throw contract_error("Environment::apply: reset() not called");
        if (state_.t >= cfg_.horizon)
            throw contract_error("Environment::apply: episode already finished");
        const double f = cfg_.action_norm(action_index);
        const double m = friction_norm();
        const int t = state_.t;
        state_ = step(state_, f, m, cfg_);
        return observe(state_, f, m, t, cfg_, &noise_rng_);
    }

    double terminal_reward() const { return drawq::terminal_reward(state_, cfg_, cal_); }

    bool done() const { return bin_ >= 0 && state_.t == cfg_.horizon; }
    int steps_done() const { return state_.t; }
    int friction_bin() const { return bin_; }
    double friction() const { return cfg_.friction.value(bin_); }
    double friction_norm() const { return cfg_.friction.normalized(bin_); }

    int horizon() const { return cfg_.horizon; }
    int action_count() const { return cfg_.action_count(); }
    double action_norm(int a) const { return cfg_.action_norm(a); }
    const EnvironmentConfig& config() const { return cfg_; }
    const Calibration& calibration() const { return cal_; }
    const std::vector<double>& masses() const { return masses_; }
    const LatentState& latent() const { return state_; }

private:
    EnvironmentConfig cfg_;
    Calibration cal_;
    std::vector<double> masses_;
    RngStream friction_rng_;
    RngStream noise_rng_;
    LatentState state_{};
    int bin_ = -1;
};

}  // namespace drawq
