#pragma once

#include "pearl/envsuite/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace pearl {

struct EnvState {
    std::vector<double> current_state;
    std::size_t steps_taken = 0;
};

/// Every family starts from rest at the origin; the seed is accepted for
/// interface symmetry with stochastic start distributions.
inline EnvState reset(const TaskInstance& task, std::uint64_t /*seed*/ = 0) {
    return EnvState{std::vector<double>(task.family.state_dim, 0.0), 0};
}

inline double reward_fn(const TaskInstance& task, const std::vector<double>& /*state*/,
                        const std::vector<double>& /*action*/, const std::vector<double>& next_state,
                        RewardMode mode) {
    const TaskFamily& f = task.family;
    if (f.id == FamilyId::velocity1d) {
        if (mode == RewardMode::sparse) throw std::invalid_argument("reward_fn: sparse mode undefined for velocity1d");
        return -std::abs(next_state.at(0) - task.task_param.at(0));
    }
    const double dist = std::hypot(next_state.at(0) - task.task_param.at(0), next_state.at(1) - task.task_param.at(1));
    if (mode == RewardMode::dense) return -dist;
    if (dist > f.goal_radius) return 0.0;
    return f.sparse_indicator ? 1.0 : f.goal_radius - dist;
}

/// Reward mode the agent observes (and the encoder sees) for this family.
inline RewardMode observed_mode(const TaskFamily& f) {
    return f.id == FamilyId::point2d_sparse_semicircle ? RewardMode::sparse : RewardMode::dense;
}

inline std::pair<Transition, EnvState> step(const TaskInstance& task, const EnvState& env,
                                            std::vector<double> action) {
    const TaskFamily& f = task.family;
    if (env.steps_taken >= f.horizon) throw std::logic_error("step: episode already finished");
    if (action.size() != f.action_dim) throw std::invalid_argument("step: action dimension mismatch");
    if (env.current_state.size() != f.state_dim) throw std::invalid_argument("step: state dimension mismatch");
    for (double& a : action) a = std::clamp(a, -1.0, 1.0);

    EnvState next{env.current_state, env.steps_taken + 1};
    for (std::size_t i = 0; i < f.state_dim; ++i) next.current_state[i] += f.action_gain * action[i];

    Transition tr;
    tr.state = env.current_state;
    tr.reward = reward_fn(task, tr.state, action, next.current_state, RewardMode::dense);
    tr.context_reward = observed_mode(f) == RewardMode::dense
                            ? tr.reward
                            : reward_fn(task, tr.state, action, next.current_state, RewardMode::sparse);
    tr.action = std::move(action);
    tr.next_state = next.current_state;
    tr.done = next.steps_taken == f.horizon;
    return {std::move(tr), std::move(next)};
}

}  // namespace pearl
