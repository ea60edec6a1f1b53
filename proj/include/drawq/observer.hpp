#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "drawq/drawsim.hpp"
#include "drawq/errors.hpp"

namespace drawq {

/// What the agent gets to see:
///   full    - action/observation history plus the true friction value
///   partial - action/observation history only (the default setting)
///   blind   - past actions only, no sensor readings
enum class ObservabilityMode { full, partial, blind };

inline std::string to_string(ObservabilityMode m) {
    switch (m) {
        case ObservabilityMode::full: return "full";
        case ObservabilityMode::partial: return "partial";
        case ObservabilityMode::blind: return "blind";
    }
    return "?";
}

inline ObservabilityMode parse_mode(const std::string& s) {
    if (s == "full") return ObservabilityMode::full;
    if (s == "partial") return ObservabilityMode::partial;
    if (s == "blind") return ObservabilityMode::blind;
    throw config_error("unknown observability mode '" + s + "'");
}

/// Action/observation pairs of the completed steps of the current episode.
/// Cleared at episode start; histories never span episodes.
struct HistoryEntry {
    int action_index;
    Observation obs;
};
using History = std::vector<HistoryEntry>;

/// Surrogate state dimension after t completed steps:
/// (dim(O) + dim(U)) * t for partial, 1 * t for blind, +1 for full
/// (the appended friction value).
inline int state_dim(ObservabilityMode mode, int t, int horizon) {
    if (t < 0 || t > horizon - 1) throw contract_error("state_dim: step out of range");
    switch (mode) {
        case ObservabilityMode::partial: return 4 * t;
        case ObservabilityMode::blind: return t;
        case ObservabilityMode::full: return 4 * t + 1;
    }
    return 0;
}

/// Concatenates the history into the surrogate state, in chronological
/// order: per completed step the normalized action, then (unless blind) the
/// three observables normalized by their nominal ranges. Full mode appends
/// the normalized friction. The empty history maps to the empty vector.
inline Eigen::VectorXd surrogate_state(const History& history, ObservabilityMode mode,
                                       const EnvironmentConfig& cfg,
                                       std::optional<double> friction_norm = std::nullopt) {
    if ((mode == ObservabilityMode::full) != friction_norm.has_value())
        throw contract_error("surrogate_state: friction must be supplied iff mode is full");
    const int per_step = mode == ObservabilityMode::blind ? 1 : 4;
    const int t = static_cast<int>(history.size());
    Eigen::VectorXd x(per_step * t + (mode == ObservabilityMode::full ? 1 : 0));
    int i = 0;
    for (const auto& h : history) {
        x[i++] = cfg.action_norm(h.action_index);
        if (mode != ObservabilityMode::blind)
            for (std::size_t c = 0; c < 3; ++c) x[i++] = h.obs[c] / cfg.obs_range[c];
    }
    if (mode == ObservabilityMode::full) x[i++] = *friction_norm;
    return x;
}

}  // namespace drawq
