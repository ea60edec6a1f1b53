#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "drawq/drawsim.hpp"
#include "drawq/errors.hpp"
#include "drawq/mdp.hpp"
#include "drawq/neural.hpp"
#include "drawq/observer.hpp"
#include "drawq/parallel.hpp"
#include "drawq/rng.hpp"

namespace drawq {

struct LearnerConfig {
    double alpha = 0.7;     // update weight on the bracket term
    double gamma = 1.0;     // fixed horizon, so neutral by default
    double epsilon0 = 0.3;
    double decay = 1e-3;    // exploration decay rate over episodes
    int retrain_interval = 50;
    int warmup = 50;        // purely random episodes before the first fit
    int folds = 5;
    int q1_hidden = 10;     // hidden width for the step-1 model
    int q_hidden = 50;      // hidden width for the later steps
    TrainConfig train;

    void validate() const {
        if (!(alpha > 0.0 && alpha <= 1.0)) throw config_error("LearnerConfig: alpha in (0,1]");
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw config_error("LearnerConfig: gamma in [0,1]");
        if (!(epsilon0 >= 0.0 && epsilon0 <= 1.0))
            throw config_error("LearnerConfig: epsilon0 in [0,1]");
        if (decay < 0.0) throw config_error("LearnerConfig: decay must be >= 0");
        if (retrain_interval < 1) throw config_error("LearnerConfig: retrain interval >= 1");
        if (warmup < 1) throw config_error("LearnerConfig: warmup >= 1");
        if (folds < 2) throw config_error("LearnerConfig: folds >= 2");
        if (q1_hidden < 1 || q_hidden < 1) throw config_error("LearnerConfig: hidden sizes >= 1");
    }
};

/// Exploration rate after i episodes: epsilon0 * exp(-decay * i).
inline double epsilon(double epsilon0, double decay, long episode) {
    if (episode < 0) throw contract_error("epsilon: episode index must be >= 0");
    return epsilon0 * std::exp(-decay * static_cast<double>(episode));
}

/// Per-step action-value ensemble: a tabular Q for the first action (the
/// pre-history state carries no information) and one model per later step.
/// models[t-1] evaluates step t on inputs [surrogate state, normalized
/// action].
template <class Model>
struct Ensemble {
    ObservabilityMode mode = ObservabilityMode::partial;
    std::vector<double> q0_value;
    std::vector<bool> q0_seen;
    std::vector<Model> models;

    int horizon() const { return static_cast<int>(models.size()) + 1; }
};

using NeuralEnsemble = Ensemble<Network>;

/// Model inputs for every action at one state: rows [state, f_a].
inline Eigen::MatrixXd action_inputs(const Eigen::VectorXd& state,
                                     const std::vector<double>& action_norms) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(action_norms.size()), state.size() + 1);
    for (Eigen::Index a = 0; a < X.rows(); ++a) {
        X.row(a).head(state.size()) = state.transpose();
        X(a, state.size()) = action_norms[static_cast<std::size_t>(a)];
    }
    return X;
}

/// Greedy action at step t; ties break toward the lowest force. At t = 0
/// only first actions seen in the replay memory compete.
template <class Model>
int greedy_action(const Ensemble<Model>& ens, const Eigen::VectorXd& state, int t,
                  const std::vector<double>& action_norms) {
    const int A = static_cast<int>(action_norms.size());
    if (t == 0) {
        int best = -1;
        double best_v = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < A; ++a) {
            const auto ai = static_cast<std::size_t>(a);
            if (!ens.q0_seen[ai]) continue;
            if (ens.q0_value[ai] > best_v) {
                best_v = ens.q0_value[ai];
                best = a;
            }
        }
        if (best < 0) throw contract_error("greedy_action: no seen first action to exploit");
        return best;
    }
    if (t < 0 || t > static_cast<int>(ens.models.size()))
        throw contract_error("greedy_action: step out of range");
    const Eigen::VectorXd q = ens.models[static_cast<std::size_t>(t - 1)].value_batch(
        action_inputs(state, action_norms));
    int best = 0;
    for (int a = 1; a < A; ++a)
        if (q[a] > q[best]) best = a;
    return best;
}

/// Epsilon-greedy action selection. One uniform draw decides the branch;
/// the random branch draws one more uniform integer.
template <class Model>
int select_action(const Ensemble<Model>& ens, const Eigen::VectorXd& state, int t, double eps,
                  RngStream& rng, const std::vector<double>& action_norms) {
    const int A = static_cast<int>(action_norms.size());
    if (rng.uniform() < eps) return rng.uniform_int(A);
    return greedy_action(ens, state, t, action_norms);
}

struct TargetDataset {
    Eigen::MatrixXd inputs;   // N x (state dim + 1)
    Eigen::VectorXd targets;  // N
};

namespace detail {

/// max_a' Q(next_state, a') for every transition in the slice, batched.
template <class Model>
Eigen::VectorXd max_successor_values(const Model& model,
                                     const std::vector<const Transition*>& slice,
                                     const std::vector<double>& action_norms) {
    const Eigen::Index n = static_cast<Eigen::Index>(slice.size());
    const Eigen::Index a_count = static_cast<Eigen::Index>(action_norms.size());
    const Eigen::Index dim = slice[0]->next_state.size();
    Eigen::MatrixXd X(n * a_count, dim + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd& ns = slice[static_cast<std::size_t>(i)]->next_state;
        if (ns.size() != dim)
            throw contract_error("max_successor_values: inconsistent successor dims");
        for (Eigen::Index a = 0; a < a_count; ++a) {
            X.row(i * a_count + a).head(dim) = ns.transpose();
            X(i * a_count + a, dim) = action_norms[static_cast<std::size_t>(a)];
        }
    }
    const Eigen::VectorXd v = model.value_batch(X);
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = v[i * a_count];
        for (Eigen::Index a = 1; a < a_count; ++a) best = std::max(best, v[i * a_count + a]);
        out[i] = best;
    }
    return out;
}

}  // namespace detail

/// Training set for the step-t model. Targets blend the previous
/// iteration's Q with the bracket R + gamma * max_a' Q_{t+1}; on the very
/// first retraining there is no previous Q and the bracket is used pure.
/// For the final step the bracket is the terminal reward alone.
template <class Model>
TargetDataset build_targets(const ReplayMemory& memory, int t, const Model* prev_q,
                            const Model* next_q, double alpha, double gamma,
                            const std::vector<double>& action_norms) {
    const auto slice = memory.slice(t);
    if (slice.empty()) throw contract_error("build_targets: empty replay slice");
    const bool terminal = t == memory.horizon() - 1;
    if (!terminal && next_q == nullptr)
        throw contract_error("build_targets: missing successor model for non-terminal step");

    const Eigen::Index n = static_cast<Eigen::Index>(slice.size());
    const Eigen::Index dim = slice[0]->state.size();
    TargetDataset ds;
    ds.inputs.resize(n, dim + 1);
    Eigen::VectorXd bracket(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Transition& tr = *slice[static_cast<std::size_t>(i)];
        if (tr.state.size() != dim)
            throw contract_error("build_targets: inconsistent state dims in slice");
        ds.inputs.row(i).head(dim) = tr.state.transpose();
        ds.inputs(i, dim) = action_norms[static_cast<std::size_t>(tr.action_index)];
        bracket[i] = tr.reward;
    }
    if (!terminal)
        bracket += gamma * detail::max_successor_values(*next_q, slice, action_norms);
    if (prev_q == nullptr) {
        ds.targets = bracket;
    } else {
        const Eigen::VectorXd prev = prev_q->value_batch(ds.inputs);
        ds.targets = (1.0 - alpha) * prev + alpha * bracket;
    }
    return ds;
}

/// Tabular first-step values: per first action, the empirical mean of
/// R + gamma * max_a' Q_1 over the episodes that started with it. Actions
/// never taken are flagged unseen and excluded from greedy choices.
template <class Model>
std::pair<std::vector<double>, std::vector<bool>> fit_q0(const ReplayMemory& memory,
                                                         const Model* q1, double gamma,
                                                         const std::vector<double>& action_norms) {
    const auto slice = memory.slice(0);
    const int A = static_cast<int>(action_norms.size());
    std::vector<double> sum(static_cast<std::size_t>(A), 0.0);
    std::vector<int> count(static_cast<std::size_t>(A), 0);
    Eigen::VectorXd succ;
    if (memory.horizon() > 1) {
        if (q1 == nullptr) throw contract_error("fit_q0: missing Q1 model");
        if (!slice.empty()) succ = detail::max_successor_values(*q1, slice, action_norms);
    }
    for (std::size_t i = 0; i < slice.size(); ++i) {
        const auto a = static_cast<std::size_t>(slice[i]->action_index);
        double v = slice[i]->reward;
        if (succ.size() > 0) v += gamma * succ[static_cast<Eigen::Index>(i)];
        sum[a] += v;
        ++count[a];
    }
    std::vector<double> value(static_cast<std::size_t>(A), 0.0);
    std::vector<bool> seen(static_cast<std::size_t>(A), false);
    for (int a = 0; a < A; ++a) {
        const auto ai = static_cast<std::size_t>(a);
        if (count[ai] > 0) {
            value[ai] = sum[ai] / count[ai];
            seen[ai] = true;
        }
    }
    return {std::move(value), std::move(seen)};
}

/// Fits networks on replay-target datasets; used by retrain for the
/// production path. Step 1 gets the narrow architecture, later steps the
/// wide one. Cross-validation folds may run concurrently.
struct NeuralTrainer {
    int q1_hidden = 10;
    int q_hidden = 50;
    TrainConfig train_cfg{};
    int threads = 1;

    int hidden(int t) const { return t == 1 ? q1_hidden : q_hidden; }

    Network fit(const TargetDataset& ds, int t, const RngStream& rng) const {
        const int h = hidden(t);
        return train(static_cast<int>(ds.inputs.cols()), h, h, ds.inputs, ds.targets, train_cfg,
                     rng);
    }

    double cross_validate(const TargetDataset& ds, int t, int folds, const RngStream& rng) const {
        const int h = hidden(t);
        return drawq::cross_validate(ds.inputs, ds.targets, h, h, folds, train_cfg, rng, threads);
    }
};

template <class Model>
struct RetrainResult {
    Ensemble<Model> ensemble;
    std::vector<double> cv_r2;  // indexed t-1 for t = 1..T-1
};

/// From-scratch refit of the whole ensemble off the complete replay
/// memory, backward in t so that step t's targets use the freshly trained
/// successor model and the previous iteration's own model. Records the
/// 5-fold CV score of each step's target dataset before the final fit.
template <class Model, class Trainer>
RetrainResult<Model> retrain(const ReplayMemory& memory, const LearnerConfig& cfg,
                             ObservabilityMode mode, const Ensemble<Model>* previous,
                             const Trainer& trainer, const std::vector<double>& action_norms,
                             const RngStream& rng) {
    if (memory.episode_count() < cfg.warmup)
        throw contract_error("retrain: replay memory smaller than warmup");
    const int T = memory.horizon();
    if (previous != nullptr && static_cast<int>(previous->models.size()) != T - 1)
        throw contract_error("retrain: previous ensemble horizon mismatch");

    RetrainResult<Model> out;
    out.ensemble.mode = mode;
    out.ensemble.models.resize(static_cast<std::size_t>(std::max(0, T - 1)));
    out.cv_r2.assign(static_cast<std::size_t>(std::max(0, T - 1)), 0.0);

    for (int t = T - 1; t >= 1; --t) {
        const auto ti = static_cast<std::size_t>(t - 1);
        const Model* prev_q = previous ? &previous->models[ti] : nullptr;
        const Model* next_q = t < T - 1 ? &out.ensemble.models[ti + 1] : nullptr;
        const TargetDataset ds =
            build_targets(memory, t, prev_q, next_q, cfg.alpha, cfg.gamma, action_norms);
        const RngStream step_rng = rng.child("t", static_cast<std::uint64_t>(t));
        out.cv_r2[ti] = trainer.cross_validate(ds, t, cfg.folds, step_rng.child("cv"));
        out.ensemble.models[ti] = trainer.fit(ds, t, step_rng.child("fit"));
    }
    auto [q0v, q0s] = fit_q0(memory, T > 1 ? &out.ensemble.models[0] : nullptr, cfg.gamma,
                             action_norms);
    out.ensemble.q0_value = std::move(q0v);
    out.ensemble.q0_seen = std::move(q0s);
    return out;
}

struct EvalConfig {
    int rollouts = 1;   // per friction bin; only meaningful with noise on
    bool noise = false;
};

/// Friction-weighted mean reward of the pure greedy policy: rollouts at
/// every pinned friction bin, exploration off, nothing written back to the
/// replay memory. Noise off makes a single rollout per bin exact.
template <class Model>
double expected_greedy_reward(const Ensemble<Model>& ens, const EnvironmentConfig& env_cfg,
                              const Calibration& cal, const EvalConfig& eval,
                              const RngStream& rng, int threads = 1) {
    if (eval.rollouts < 1) throw config_error("expected_greedy_reward: rollouts must be >= 1");
    EnvironmentConfig cfg = env_cfg;
    cfg.noise = eval.noise;
    const auto masses = friction_masses(cfg.friction);
    std::vector<double> action_norms(static_cast<std::size_t>(cfg.action_count()));
    for (int a = 0; a < cfg.action_count(); ++a)
        action_norms[static_cast<std::size_t>(a)] = cfg.action_norm(a);
    const int rollouts = eval.noise ? eval.rollouts : 1;

    std::vector<double> bin_value(static_cast<std::size_t>(cfg.friction.bins), 0.0);
    parallel_for(cfg.friction.bins, threads, [&](int k) {
        double acc = 0.0;
        for (int e = 0; e < rollouts; ++e) {
            const RngStream roll_rng =
                rng.child("bin" + std::to_string(k) + "/roll", static_cast<std::uint64_t>(e));
            Environment env(cfg, cal, roll_rng.child("friction"), roll_rng.child("noise"));
            env.reset(k);
            RngStream policy_rng = roll_rng.child("policy");
            auto policy = [&](int t, const Eigen::VectorXd& x, RngStream&) {
                return greedy_action(ens, x, t, action_norms);
            };
            acc += run_episode(env, policy, ens.mode, policy_rng).terminal_reward;
        }
        bin_value[static_cast<std::size_t>(k)] = acc / rollouts;
    });
    double total = 0.0;
    for (int k = 0; k < cfg.friction.bins; ++k)
        total += masses[static_cast<std::size_t>(k)] * bin_value[static_cast<std::size_t>(k)];
    return total;
}

/// Flat-text ensemble persistence (q0 table plus per-step network dumps).
inline void save_ensemble(const NeuralEnsemble& ens, std::ostream& out) {
    out << "ensemble mode=" << to_string(ens.mode) << " horizon=" << ens.horizon()
        << " actions=" << ens.q0_value.size() << '\n';
    for (std::size_t a = 0; a < ens.q0_value.size(); ++a) {
        out << (a == 0 ? "q0 " : " ");
        if (ens.q0_seen[a]) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g", ens.q0_value[a]);
            out << buf;
        } else {
            out << "unseen";
        }
    }
    out << '\n';
    for (const Network& net : ens.models) net.dump(out);
}

inline void save_ensemble(const NeuralEnsemble& ens, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw config_error("save_ensemble: cannot open " + path);
    save_ensemble(ens, out);
    if (!out) throw config_error("save_ensemble: write failed for " + path);
}

inline NeuralEnsemble load_ensemble(std::istream& in) {
    std::string tag, mode_kv, horizon_kv, actions_kv;
    if (!(in >> tag >> mode_kv >> horizon_kv >> actions_kv) || tag != "ensemble")
        throw config_error("load_ensemble: bad header");
    auto value_of = [](const std::string& kv, const char* key) {
        const std::string prefix = std::string(key) + "=";
        if (kv.rfind(prefix, 0) != 0) throw config_error("load_ensemble: bad header field " + kv);
        return kv.substr(prefix.size());
    };
    NeuralEnsemble ens;
    ens.mode = parse_mode(value_of(mode_kv, "mode"));
    const int horizon = std::stoi(value_of(horizon_kv, "horizon"));
    const int actions = std::stoi(value_of(actions_kv, "actions"));
    if (horizon < 1 || actions < 1) throw config_error("load_ensemble: bad sizes");
    if (!(in >> tag) || tag != "q0") throw config_error("load_ensemble: missing q0 table");
    ens.q0_value.assign(static_cast<std::size_t>(actions), 0.0);
    ens.q0_seen.assign(static_cast<std::size_t>(actions), false);
    for (int a = 0; a < actions; ++a) {
        std::string cell;
        if (!(in >> cell)) throw config_error("load_ensemble: truncated q0 table");
        if (cell != "unseen") {
            ens.q0_value[static_cast<std::size_t>(a)] = std::stod(cell);
            ens.q0_seen[static_cast<std::size_t>(a)] = true;
        }
    }
    for (int t = 1; t < horizon; ++t) ens.models.push_back(Network::parse(in));
    return ens;
}

inline NeuralEnsemble load_ensemble(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("load_ensemble: cannot open " + path);
    return load_ensemble(in);
}

}  // namespace drawq
