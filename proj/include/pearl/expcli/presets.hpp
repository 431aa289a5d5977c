#pragma once

#include "pearl/expcli/config.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace pearl::expcli {

enum class Preset { rnn_tran, rnn_traj, ctx_off_policy, ctx_off_policy_rl_batch, deterministic_z };

inline const std::vector<std::pair<Preset, const char*>>& preset_names() {
    static const std::vector<std::pair<Preset, const char*>> names = {
        {Preset::rnn_tran, "rnn_tran"},
        {Preset::rnn_traj, "rnn_traj"},
        {Preset::ctx_off_policy, "ctx_off_policy"},
        {Preset::ctx_off_policy_rl_batch, "ctx_off_policy_rl_batch"},
        {Preset::deterministic_z, "deterministic_z"},
    };
    return names;
}

inline const char* to_string(Preset p) {
    for (const auto& [v, n] : preset_names()) {
        if (v == p) return n;
    }
    return "?";
}

inline Preset preset_from_string(const std::string& s) {
    for (const auto& [v, n] : preset_names()) {
        if (s == n) return v;
    }
    throw std::invalid_argument("unknown preset '" + s + "'");
}

/// Applies exactly the preset's deltas; nothing else changes.
///
///   rnn_tran                 recurrent encoder, transition RL batches
///   rnn_traj                 recurrent encoder, trajectory RL batches
///   ctx_off_policy           context drawn from the whole buffer
///   ctx_off_policy_rl_batch  context is the RL batch itself
///   deterministic_z          point-estimate posterior
inline ExperimentConfig apply_preset(ExperimentConfig cfg, Preset p) {
    switch (p) {
        case Preset::rnn_tran:
            cfg.train.encoder.variant = EncoderVariant::recurrent;
            cfg.train.rl_batch_trajectories = false;
            break;
        case Preset::rnn_traj:
            cfg.train.encoder.variant = EncoderVariant::recurrent;
            cfg.train.rl_batch_trajectories = true;
            break;
        case Preset::ctx_off_policy:
            cfg.train.context.kind = ContextStrategyKind::entire_buffer;
            break;
        case Preset::ctx_off_policy_rl_batch:
            cfg.train.context.kind = ContextStrategyKind::same_as_rl_batch;
            break;
        case Preset::deterministic_z:
            cfg.train.encoder.variant = EncoderVariant::deterministic;
            break;
    }
    return cfg;
}

}  // namespace pearl::expcli
