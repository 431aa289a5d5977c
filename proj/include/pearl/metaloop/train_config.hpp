#pragma once

#include "pearl/actor_critic/sac.hpp"
#include "pearl/context/encoder.hpp"
#include "pearl/envsuite/tasks.hpp"
#include "pearl/replay/task_buffer.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pearl {

struct TrainConfig {
    // tasks
    FamilyId family = FamilyId::point2d_dense;
    std::size_t horizon = 20;
    double goal_radius = 0.2;
    bool sparse_indicator = false;
    std::size_t n_train_tasks = 10;
    std::size_t n_test_tasks = 5;
    std::uint64_t task_seed = 7;

    // networks
    std::vector<std::size_t> hidden_dims{64, 64, 64};
    EncoderConfig encoder;

    // losses and optimizers
    SacConfig sac;
    double temperature = 0.0;  ///< 0 selects 0.2 / action_dim

    // replay and sampling
    std::size_t buffer_capacity = 100000;
    std::size_t rl_batch_size = 256;
    std::size_t context_batch_size = 64;
    ContextStrategy context;
    bool rl_batch_trajectories = false;
    bool collect_context_from_buffer = false;

    // loop
    std::size_t tasks_per_meta_batch = 0;  ///< 0 means every training task
    std::size_t collect_episodes = 3;
    std::size_t env_step_budget = 300000;
    std::size_t eval_every = 1;  ///< iterations between evaluations
    std::size_t eval_episodes = 3;
    std::size_t eval_rollouts = 1;
    std::size_t log_every = 100;
    std::uint64_t seed = 1;

    TaskFamily task_family() const {
        TaskFamily f = make_family(family, horizon);
        f.goal_radius = goal_radius;
        f.sparse_indicator = sparse_indicator;
        f.validate();
        return f;
    }

    SacConfig resolved_sac() const {
        SacConfig s = sac;
        s.temperature = temperature > 0.0 ? temperature : default_temperature(task_family().action_dim);
        return s;
    }

    std::size_t steps_per_iteration() const { return context.refresh_interval; }

    std::size_t env_steps_per_collection() const {
        return n_train_tasks * collect_episodes * horizon;
    }

    void validate() const {
        task_family();
        resolved_sac().validate();
        context.validate();
        auto positive = [](std::size_t v, const char* name) {
            if (v == 0) throw std::invalid_argument(std::string(name) + " must be >= 1");
        };
        positive(n_train_tasks, "n_train_tasks");
        positive(n_test_tasks, "n_test_tasks");
        positive(buffer_capacity, "buffer_capacity");
        positive(rl_batch_size, "rl_batch_size");
        positive(context_batch_size, "context_batch_size");
        positive(collect_episodes, "collect_episodes");
        positive(env_step_budget, "env_step_budget");
        positive(eval_every, "eval_every");
        positive(eval_episodes, "eval_episodes");
        positive(eval_rollouts, "eval_rollouts");
        positive(log_every, "log_every");
        positive(encoder.latent_dim, "latent_dim");
        for (auto h : hidden_dims) positive(h, "hidden_dims");
        for (auto h : encoder.hidden_dims) positive(h, "encoder hidden_dims");
        if (tasks_per_meta_batch > n_train_tasks) {
            throw std::invalid_argument("tasks_per_meta_batch exceeds n_train_tasks");
        }
        if (eval_episodes < 3) throw std::invalid_argument("eval_episodes must be >= 3");
    }
};

}  // namespace pearl
