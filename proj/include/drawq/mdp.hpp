#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

#include "drawq/drawsim.hpp"
#include "drawq/errors.hpp"
#include "drawq/observer.hpp"
#include "drawq/rng.hpp"

namespace drawq {

/// One replay-memory entry. The reward is attached to the final transition
/// only; next_state is empty there (no successor is ever evaluated past the
/// horizon).
struct Transition {
    int step;
    Eigen::VectorXd state;
    int action_index;
    Eigen::VectorXd next_state;
    double reward;
};

/// Append-only store of full episodes. Entries are never mutated; training
/// targets are derived transiently at retraining time.
class ReplayMemory {
public:
    explicit ReplayMemory(int horizon) : horizon_(horizon) {
        if (horizon < 1) throw contract_error("ReplayMemory: horizon must be >= 1");
    }

    void append_episode(std::vector<Transition> episode) {
        if (static_cast<int>(episode.size()) != horizon_)
            throw contract_error("ReplayMemory: episode length != horizon");
        for (int t = 0; t < horizon_; ++t) {
            if (episode[static_cast<std::size_t>(t)].step != t)
                throw contract_error("ReplayMemory: transition steps out of order");
            if (t < horizon_ - 1 && episode[static_cast<std::size_t>(t)].reward != 0.0)
                throw contract_error("ReplayMemory: non-terminal transition carries reward");
        }
        for (auto& tr : episode) entries_.push_back(std::move(tr));
        ++episodes_;
    }

    const std::vector<Transition>& entries() const { return entries_; }
    int episode_count() const { return episodes_; }
    int horizon() const { return horizon_; }
    std::size_t size() const { return entries_.size(); }

    /// All transitions with the given step index, in insertion order.
    std::vector<const Transition*> slice(int t) const {
        if (t < 0 || t >= horizon_) throw contract_error("ReplayMemory::slice: step out of range");
        std::vector<const Transition*> out;
        out.reserve(static_cast<std::size_t>(episodes_));
        for (int e = 0; e < episodes_; ++e)
            out.push_back(&entries_[static_cast<std::size_t>(e) * horizon_ + t]);
        return out;
    }

private:
    int horizon_;
    int episodes_ = 0;
    std::vector<Transition> entries_;
};

inline std::vector<const Transition*> replay_slice(const ReplayMemory& memory, int t) {
    return memory.slice(t);
}

struct EpisodeResult {
    std::vector<Transition> transitions;
    double terminal_reward = 0.0;
    int friction_bin = -1;
    double friction = 0.0;
    std::vector<int> actions;
};

/// Runs one episode on a freshly reset environment. The policy is a
/// callable (t, surrogate state, rng) -> action index; out-of-range actions
/// abort the episode with a contract error. Returns exactly `horizon`
/// transitions; only the last one carries the terminal reward.
template <class Policy>
EpisodeResult run_episode(Environment& env, Policy&& policy, ObservabilityMode mode,
                          RngStream& policy_rng) {
    if (env.friction_bin() < 0 || env.steps_done() != 0)
        throw contract_error("run_episode: environment must be freshly reset");
    const int T = env.horizon();
    const std::optional<double> fr = mode == ObservabilityMode::full
                                         ? std::optional<double>(env.friction_norm())
                                         : std::nullopt;
    EpisodeResult result;
    result.friction_bin = env.friction_bin();
    result.friction = env.friction();
    result.transitions.reserve(static_cast<std::size_t>(T));
    History history;
    Eigen::VectorXd x = surrogate_state(history, mode, env.config(), fr);
    for (int t = 0; t < T; ++t) {
        const int a = policy(t, x, policy_rng);
        if (a < 0 || a >= env.action_count())
            throw contract_error("run_episode: policy returned out-of-range action");
        const Observation obs = env.apply(a);
        history.push_back({a, obs});
        result.actions.push_back(a);
        Eigen::VectorXd next = surrogate_state(history, mode, env.config(), fr);
        Transition tr;
        tr.step = t;
        tr.state = std::move(x);
        tr.action_index = a;
        if (t < T - 1) {
            tr.next_state = next;
            tr.reward = 0.0;
        } else {
            tr.next_state = Eigen::VectorXd();
            tr.reward = env.terminal_reward();
            result.terminal_reward = tr.reward;
        }
        result.transitions.push_back(std::move(tr));
        x = std::move(next);
    }
    return result;
}

}  // namespace drawq
