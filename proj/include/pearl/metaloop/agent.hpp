#pragma once

#include "pearl/actor_critic/sac.hpp"
#include "pearl/context/encoder.hpp"
#include "pearl/diffcore/adam.hpp"
#include "pearl/envsuite/env.hpp"
#include "pearl/metaloop/train_config.hpp"
#include "pearl/replay/task_buffer.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace pearl {

/// Encoder, actor-critic networks and one optimizer per parameter store.
struct PearlAgent {
    ContextEncoder encoder;
    AgentNets nets;
    AdamState opt_encoder;
    AdamState opt_policy;
    AdamState opt_q1;
    AdamState opt_q2;
    AdamState opt_value;

    PearlAgent() = default;

    template <class Rng>
    PearlAgent(const TrainConfig& cfg, Rng& rng) {
        const TaskFamily f = cfg.task_family();
        const SacConfig sac = cfg.resolved_sac();
        encoder = ContextEncoder(cfg.encoder, f.state_dim, f.action_dim, rng);
        nets = AgentNets(f.state_dim, f.action_dim, cfg.encoder.latent_dim, cfg.hidden_dims, rng);
        opt_encoder = AdamState(encoder.params().size(), sac.lr_encoder);
        opt_policy = AdamState(nets.policy.params.size(), sac.lr_policy);
        opt_q1 = AdamState(nets.q1.params.size(), sac.lr_critic);
        opt_q2 = AdamState(nets.q2.params.size(), sac.lr_critic);
        opt_value = AdamState(nets.value.params.size(), sac.lr_critic);
    }
};

/// One z draw from q. Point estimates return their mean.
template <class Rng>
std::vector<double> draw_latent(const DiagonalGaussian& q, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> z(q.dim());
    for (std::size_t j = 0; j < q.dim(); ++j) {
        z[j] = q.var[j] > 0.0 ? q.mean[j] + std::sqrt(q.var[j]) * normal(rng) : q.mean[j];
    }
    return z;
}

struct EpisodeRecord {
    std::vector<Transition> transitions;
    std::vector<double> z;                      ///< the single draw conditioning this episode
    std::vector<std::vector<double>> z_trace;   ///< z handed to the policy at each step, when instrumented
    DiagonalGaussian posterior;                 ///< belief the draw came from
    double observed_return = 0.0;               ///< sum of context_reward
    double train_return = 0.0;                  ///< sum of reward
};

/// Rolls out one full episode with z held fixed throughout.
template <class Rng>
EpisodeRecord rollout(const TaskInstance& task, const AgentNets& nets, const DiagonalGaussian& posterior,
                      bool deterministic_actions, Rng& rng, bool instrument = false) {
    EpisodeRecord ep;
    ep.posterior = posterior;
    ep.z = draw_latent(posterior, rng);
    EnvState env = reset(task);
    while (env.steps_taken < task.family.horizon) {
        const std::vector<double>& z = ep.z;
        if (instrument) ep.z_trace.push_back(z);
        auto action = act(nets, env.current_state, z, deterministic_actions, rng);
        auto [tr, next] = step(task, env, std::move(action));
        ep.observed_return += tr.context_reward;
        ep.train_return += tr.reward;
        ep.transitions.push_back(std::move(tr));
        env = std::move(next);
    }
    return ep;
}

struct AdaptationTrace {
    int task_id = 0;
    std::vector<double> returns;             ///< observed return per episode
    std::vector<DiagonalGaussian> posteriors;  ///< belief before each episode
    std::vector<std::size_t> context_sizes;  ///< context size before each episode
    std::vector<std::vector<double>> latents;
};

/// Posterior-sampling adaptation on one task with frozen parameters: the
/// context starts empty, one z per episode, every episode is appended to the
/// context before the next draw.
template <class Rng>
AdaptationTrace meta_test(const TaskInstance& task, PearlAgent& agent, std::size_t episodes, Rng& rng,
                          bool deterministic_actions = true) {
    AdaptationTrace trace;
    trace.task_id = task.task_id;
    ContextBatch context;
    context.task_id = task.task_id;
    for (std::size_t k = 0; k < episodes; ++k) {
        const DiagonalGaussian q = agent.encoder.infer(context);
        EpisodeRecord ep = rollout(task, agent.nets, q, deterministic_actions, rng);
        trace.posteriors.push_back(q);
        trace.context_sizes.push_back(context.size());
        trace.returns.push_back(ep.observed_return);
        trace.latents.push_back(ep.z);
        context.transitions.insert(context.transitions.end(), ep.transitions.begin(), ep.transitions.end());
    }
    return trace;
}

struct EvalResult {
    double protocol_return = 0.0;             ///< mean return of episode 3
    std::vector<double> mean_episode_returns; ///< mean over tasks and rollouts, per episode index
    std::vector<double> mean_posterior_var;   ///< per episode index, averaged over dims, tasks, rollouts
    std::vector<AdaptationTrace> traces;
};

/// Mean over test tasks (and repeated rollouts) of the return of the episode
/// collected after two episodes have been accumulated into the context.
template <class Rng>
EvalResult evaluate_protocol(PearlAgent& agent, const std::vector<TaskInstance>& tasks, std::size_t episodes,
                             Rng& rng, std::size_t rollouts = 1) {
    if (episodes < 3) throw std::invalid_argument("evaluate_protocol: need at least 3 episodes");
    if (tasks.empty() || rollouts == 0) throw std::invalid_argument("evaluate_protocol: nothing to evaluate");
    EvalResult r;
    r.mean_episode_returns.assign(episodes, 0.0);
    r.mean_posterior_var.assign(episodes, 0.0);
    for (std::size_t rep = 0; rep < rollouts; ++rep) {
        for (const auto& task : tasks) {
            AdaptationTrace t = meta_test(task, agent, episodes, rng);
            for (std::size_t k = 0; k < episodes; ++k) {
                r.mean_episode_returns[k] += t.returns[k];
                const auto& v = t.posteriors[k].var;
                r.mean_posterior_var[k] += std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
            }
            r.traces.push_back(std::move(t));
        }
    }
    const double n = double(r.traces.size());
    for (auto& x : r.mean_episode_returns) x /= n;
    for (auto& x : r.mean_posterior_var) x /= n;
    r.protocol_return = r.mean_episode_returns[2];
    return r;
}

}  // namespace pearl
