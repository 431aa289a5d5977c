#pragma once

#include "pearl/actor_critic/sac.hpp"
#include "pearl/context/encoder.hpp"
#include "pearl/context/gaussian.hpp"
#include "pearl/diffcore/adam.hpp"
#include "pearl/envsuite/env.hpp"
#include "pearl/envsuite/tasks.hpp"
#include "pearl/metaloop/agent.hpp"
#include "pearl/metaloop/metrics.hpp"
#include "pearl/metaloop/train_config.hpp"
#include "pearl/replay/task_buffer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace pearl {

/// Independent engines so that, e.g., context draws never perturb RL-batch draws.
struct RngStreams {
    std::mt19937_64 init;
    std::mt19937_64 collect;
    std::mt19937_64 rl_batch;
    std::mt19937_64 context;
    std::mt19937_64 noise;
    std::mt19937_64 eval;

    explicit RngStreams(std::uint64_t seed = 1)
        : init(stream(seed, 1)), collect(stream(seed, 2)), rl_batch(stream(seed, 3)), context(stream(seed, 4)),
          noise(stream(seed, 5)), eval(stream(seed, 6)) {}

private:
    static std::mt19937_64 stream(std::uint64_t seed, std::uint32_t id) {
        std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), id};
        return std::mt19937_64(seq);
    }
};

struct CollectOptions {
    bool context_from_buffer = false;  ///< re-sample the running context from the buffer instead of the fresh episodes
    std::size_t context_size = 64;     ///< used with context_from_buffer
    bool instrument = false;
};

/// Collection for one task: K episodes, z re-drawn from the posterior of the
/// running context before each one (the prior for the first). The whole phase
/// becomes the buffer's recent chunk.
template <class Rng>
std::vector<EpisodeRecord> collect_for_task(const TaskInstance& task, PearlAgent& agent, TaskBuffer& buffer,
                                            std::size_t episodes, Rng& rng, const CollectOptions& opts = {}) {
    std::vector<EpisodeRecord> out;
    ContextBatch context;
    context.task_id = task.task_id;
    for (std::size_t k = 0; k < episodes; ++k) {
        const DiagonalGaussian q = agent.encoder.infer(context);
        EpisodeRecord ep = rollout(task, agent.nets, q, false, rng, opts.instrument);
        buffer.add(ep.transitions, k == 0 ? ChunkMode::fresh : ChunkMode::append);
        if (opts.context_from_buffer) {
            ContextStrategy whole{ContextStrategyKind::entire_buffer, 1};
            context = sample_context(buffer, whole, opts.context_size, nullptr, rng, task.task_id);
        } else {
            context.transitions.insert(context.transitions.end(), ep.transitions.begin(), ep.transitions.end());
        }
        out.push_back(std::move(ep));
    }
    return out;
}

struct TaskStepMetrics {
    int task_id = 0;
    double critic = 0.0;
    double actor = 0.0;
    double value = 0.0;
    double kl = 0.0;  ///< beta-weighted
    double posterior_mean_norm = 0.0;
    double posterior_var_norm = 0.0;
};

struct StepMetrics {
    std::vector<TaskStepMetrics> tasks;
    double total_critic = 0.0;
    double total_actor = 0.0;
    double total_value = 0.0;
    double total_kl = 0.0;
};

struct StepInputs {
    std::vector<std::vector<Transition>> rl_batches;
    std::vector<ContextBatch> contexts;
};

/// Draws each task's RL batch and context from independent streams.
inline StepInputs sample_step_inputs(const std::vector<std::size_t>& task_indices, std::vector<TaskBuffer>& buffers,
                                     const TrainConfig& cfg, RngStreams& rngs) {
    StepInputs in;
    const std::size_t horizon = cfg.horizon;
    for (std::size_t idx : task_indices) {
        const TaskBuffer& buf = buffers.at(idx);
        if (buf.empty()) throw std::invalid_argument("train_step: empty buffer for task " + std::to_string(idx));
        std::vector<Transition> rl;
        if (cfg.rl_batch_trajectories) {
            const std::size_t available = buf.complete_episode_starts().size();
            const std::size_t want = std::max<std::size_t>(1, (cfg.rl_batch_size + horizon - 1) / horizon);
            rl = sample_context_trajectories(buf, std::min(want, available), rngs.rl_batch).transitions;
        } else {
            rl = sample_rl_batch(buf, cfg.rl_batch_size, rngs.rl_batch);
        }
        ContextBatch ctx;
        if (cfg.encoder.variant == EncoderVariant::recurrent &&
            cfg.context.kind != ContextStrategyKind::same_as_rl_batch) {
            const std::size_t want = std::max<std::size_t>(1, (cfg.context_batch_size + horizon - 1) / horizon);
            ctx = sample_recent_trajectories(buf, cfg.context.kind == ContextStrategyKind::recent, want, rngs.context);
        } else if (cfg.context.kind == ContextStrategyKind::same_as_rl_batch) {
            ctx = sample_context(buf, cfg.context, cfg.context_batch_size, &rl, rngs.context);
        } else {
            ctx = sample_context(buf, cfg.context, cfg.context_batch_size, nullptr, rngs.context);
        }
        ctx.task_id = int(idx);
        in.rl_batches.push_back(std::move(rl));
        in.contexts.push_back(std::move(ctx));
    }
    return in;
}

/// One joint update over the meta-batch.
///
/// Per task: posterior from the context, reparameterized z, critic, actor,
/// value and KL terms. The summed objective is differentiated once; the
/// stop-gradient structure routes critic + KL into the encoder, critic into
/// the Q networks, actor into the policy and value into V. Targets are then
/// soft-updated.
inline StepMetrics train_step(PearlAgent& agent, const StepInputs& in, const SacConfig& sac, RngStreams& rngs) {
    if (in.rl_batches.empty() || in.rl_batches.size() != in.contexts.size()) {
        throw std::invalid_argument("train_step: mismatched meta-batch");
    }
    const std::size_t n_tasks = in.rl_batches.size();
    const auto latent = Eigen::Index(agent.encoder.latent_dim());
    const auto action_dim = Eigen::Index(agent.nets.action_dim);
    std::normal_distribution<double> normal(0.0, 1.0);

    Tape tape;
    std::vector<PackedBatch> packed;
    std::vector<Var> z_rows;
    std::vector<GaussianVar> posts;
    std::vector<Var> kls;
    std::vector<Eigen::Index> offsets{0};
    for (std::size_t i = 0; i < n_tasks; ++i) {
        if (in.rl_batches[i].empty()) throw std::invalid_argument("train_step: empty RL batch");
        packed.push_back(pack_batch(in.rl_batches[i]));
        GaussianVar q = agent.encoder.posterior(in.contexts[i], tape);
        Matrix eps(1, latent);
        for (Eigen::Index j = 0; j < latent; ++j) eps(0, j) = normal(rngs.noise);
        Var z = sample_latent(q, eps, tape);
        z_rows.push_back(ops::repeat_rows(z, packed.back().size()));
        kls.push_back(ops::scale(kl_to_prior(q), sac.kl_weight));
        posts.push_back(q);
        offsets.push_back(offsets.back() + packed.back().size());
    }
    const PackedBatch batch = stack_batches(packed);
    const Eigen::Index n = batch.size();
    Var z = ops::concat_rows(z_rows);
    const Matrix z_detached = z.value();

    // Row weights 1/B_i turn row sums into sums of per-task means.
    Matrix weights(n, 1);
    for (std::size_t i = 0; i < n_tasks; ++i) {
        weights.middleRows(offsets[i], offsets[i + 1] - offsets[i]).setConstant(1.0 / double(packed[i].size()));
    }
    Var w = tape.constant(weights);

    Matrix noise(n, action_dim);
    for (Eigen::Index k = 0; k < noise.size(); ++k) noise(k) = normal(rngs.noise);

    Var critic = critic_terms(agent.nets, batch, z, z_detached, sac, tape);
    PolicyTerms pt = policy_terms(agent.nets, batch, z_detached, noise, sac, tape);

    Var critic_sum = ops::sum(ops::mul(critic, w));
    Var actor_sum = ops::sum(ops::mul(pt.actor, w));
    Var value_sum = ops::sum(ops::mul(pt.value, w));
    Var kl_sum = ops::sum(ops::concat_rows(kls));
    Var total = ops::add(ops::add(critic_sum, kl_sum), ops::add(actor_sum, value_sum));

    StepMetrics m;
    m.total_critic = critic_sum.scalar();
    m.total_actor = actor_sum.scalar();
    m.total_value = value_sum.scalar();
    m.total_kl = kl_sum.scalar();
    for (std::size_t i = 0; i < n_tasks; ++i) {
        const auto b = offsets[i];
        const auto len = offsets[i + 1] - offsets[i];
        TaskStepMetrics t;
        t.task_id = in.contexts[i].task_id;
        t.critic = critic.value().middleRows(b, len).mean();
        t.actor = pt.actor.value().middleRows(b, len).mean();
        t.value = pt.value.value().middleRows(b, len).mean();
        t.kl = kls[i].scalar();
        t.posterior_mean_norm = posts[i].mean.value().norm();
        t.posterior_var_norm = posts[i].var.value().norm();
        m.tasks.push_back(t);
    }

    tape.backward(total);
    adam_step(agent.encoder.params(), agent.opt_encoder);
    adam_step(agent.nets.q1.params, agent.opt_q1);
    if (sac.twin_q) adam_step(agent.nets.q2.params, agent.opt_q2);
    adam_step(agent.nets.value.params, agent.opt_value);
    adam_step(agent.nets.policy.params, agent.opt_policy);
    soft_update_target(agent.nets, sac.tau);
    return m;
}

inline nlohmann::json to_json(const StepMetrics& m) {
    nlohmann::json j;
    for (const char* key : {"critic", "actor", "value", "kl", "post_mean_norm", "post_var_norm"}) {
        j[key] = nlohmann::json::array();
    }
    for (const auto& t : m.tasks) {
        j["critic"].push_back(t.critic);
        j["actor"].push_back(t.actor);
        j["value"].push_back(t.value);
        j["kl"].push_back(t.kl);
        j["post_mean_norm"].push_back(t.posterior_mean_norm);
        j["post_var_norm"].push_back(t.posterior_var_norm);
    }
    return j;
}

/// Stateful driver for meta-training: tasks, agent, per-task buffers,
/// random streams and counters.
class MetaTrainer {
public:
    explicit MetaTrainer(TrainConfig cfg)
        : cfg_(std::move(cfg)), rngs_(cfg_.seed) {
        cfg_.validate();
        sac_ = cfg_.resolved_sac();
        tasks_ = sample_tasks(cfg_.task_family(), cfg_.n_train_tasks, cfg_.n_test_tasks, cfg_.task_seed);
        agent_ = PearlAgent(cfg_, rngs_.init);
        buffers_.assign(cfg_.n_train_tasks, TaskBuffer(cfg_.buffer_capacity));
    }

    const TrainConfig& config() const { return cfg_; }
    const SacConfig& sac() const { return sac_; }
    PearlAgent& agent() { return agent_; }
    const PearlAgent& agent() const { return agent_; }
    const TaskSet& tasks() const { return tasks_; }
    std::vector<TaskBuffer>& buffers() { return buffers_; }
    const std::vector<TaskBuffer>& buffers() const { return buffers_; }
    RngStreams& rngs() { return rngs_; }
    const RngStreams& rngs() const { return rngs_; }

    std::uint64_t env_steps() const { return env_steps_; }
    std::uint64_t optimizer_steps() const { return optimizer_steps_; }
    std::uint64_t iteration() const { return iteration_; }
    const std::vector<std::uint64_t>& refresh_steps() const { return refresh_steps_; }

    void set_counters(std::uint64_t env_steps, std::uint64_t opt_steps, std::uint64_t iteration) {
        env_steps_ = env_steps;
        optimizer_steps_ = opt_steps;
        iteration_ = iteration;
    }

    /// Collects on every training task; refreshes each recent chunk.
    std::vector<std::vector<EpisodeRecord>> collection_phase(bool instrument = false) {
        CollectOptions opts{cfg_.collect_context_from_buffer, cfg_.context_batch_size, instrument};
        std::vector<std::vector<EpisodeRecord>> all;
        for (std::size_t i = 0; i < tasks_.train.size(); ++i) {
            auto eps = collect_for_task(tasks_.train[i], agent_, buffers_[i], cfg_.collect_episodes, rngs_.collect, opts);
            for (const auto& e : eps) env_steps_ += e.transitions.size();
            all.push_back(std::move(eps));
        }
        refresh_steps_.push_back(optimizer_steps_);
        return all;
    }

    std::vector<std::size_t> meta_batch() {
        std::vector<std::size_t> idx(tasks_.train.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        if (cfg_.tasks_per_meta_batch == 0 || cfg_.tasks_per_meta_batch == idx.size()) return idx;
        std::shuffle(idx.begin(), idx.end(), rngs_.rl_batch);
        idx.resize(cfg_.tasks_per_meta_batch);
        std::sort(idx.begin(), idx.end());
        return idx;
    }

    StepMetrics train_step() {
        const StepInputs in = sample_step_inputs(meta_batch(), buffers_, cfg_, rngs_);
        StepMetrics m = pearl::train_step(agent_, in, sac_, rngs_);
        ++optimizer_steps_;
        return m;
    }

    EvalResult evaluate() {
        return evaluate_protocol(agent_, tasks_.test, cfg_.eval_episodes, rngs_.eval, cfg_.eval_rollouts);
    }

    /// Alternates collection and optimization until the env-step budget would
    /// be exceeded; evaluates every `eval_every` iterations and at the end.
    void run(MetricsLog& log, const std::function<void(MetaTrainer&, const EvalResult*)>& on_iteration = {}) {
        bool evaluated_last = false;
        while (env_steps_ + cfg_.env_steps_per_collection() <= cfg_.env_step_budget) {
            collection_phase();
            log.write({{"type", "refresh"}, {"step", optimizer_steps_}, {"env_steps", env_steps_}});
            for (std::size_t s = 0; s < cfg_.steps_per_iteration(); ++s) {
                StepMetrics m = train_step();
                if (optimizer_steps_ % cfg_.log_every == 0) {
                    nlohmann::json row = to_json(m);
                    row["type"] = "train";
                    row["step"] = optimizer_steps_;
                    row["env_steps"] = env_steps_;
                    log.write(row);
                }
            }
            ++iteration_;
            evaluated_last = false;
            std::optional<EvalResult> eval;
            if (iteration_ % cfg_.eval_every == 0) {
                eval = evaluate();
                log.write(eval_row(*eval));
                evaluated_last = true;
            }
            if (on_iteration) on_iteration(*this, eval ? &*eval : nullptr);
        }
        if (!evaluated_last) {
            EvalResult eval = evaluate();
            log.write(eval_row(eval));
            if (on_iteration) on_iteration(*this, &eval);
        }
    }

    nlohmann::json eval_row(const EvalResult& r) const {
        return {{"type", "eval"},
                {"step", optimizer_steps_},
                {"env_steps", env_steps_},
                {"eval_return", r.protocol_return},
                {"episode_returns", r.mean_episode_returns},
                {"posterior_var", r.mean_posterior_var}};
    }

private:
    TrainConfig cfg_;
    SacConfig sac_;
    RngStreams rngs_;
    TaskSet tasks_;
    PearlAgent agent_;
    std::vector<TaskBuffer> buffers_;
    std::uint64_t env_steps_ = 0;
    std::uint64_t optimizer_steps_ = 0;
    std::uint64_t iteration_ = 0;
    std::vector<std::uint64_t> refresh_steps_;
};

}  // namespace pearl
