#pragma once

#include "pearl/diffcore/distributions.hpp"
#include "pearl/diffcore/mlp.hpp"
#include "pearl/diffcore/ops.hpp"
#include "pearl/envsuite/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

namespace pearl {

struct SacConfig {
    double discount = 0.99;
    double temperature = 0.1;  ///< resolved value; 0.2 / action_dim by default
    double tau = 0.005;
    double kl_weight = 0.1;
    double lr_encoder = 3e-4;
    double lr_policy = 3e-4;
    double lr_critic = 3e-4;
    bool twin_q = true;

    void validate() const {
        if (!(discount > 0.0 && discount < 1.0)) throw std::invalid_argument("SacConfig: discount must lie in (0,1)");
        if (!(temperature > 0.0)) throw std::invalid_argument("SacConfig: temperature must be positive");
        if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("SacConfig: tau must lie in (0,1]");
        if (!(kl_weight >= 0.0)) throw std::invalid_argument("SacConfig: kl_weight must be >= 0");
        if (!(lr_encoder > 0.0 && lr_policy > 0.0 && lr_critic > 0.0)) {
            throw std::invalid_argument("SacConfig: learning rates must be positive");
        }
    }
};

inline double default_temperature(std::size_t action_dim) { return 0.2 / double(action_dim); }

/// Policy, twin critics, state value and its target, all conditioned on z.
struct AgentNets {
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    std::size_t latent_dim = 0;
    Mlp policy;        ///< (s, z) -> (mean, log_std)
    Mlp q1;            ///< (s, a, z) -> Q
    Mlp q2;
    Mlp value;         ///< (s, z) -> V
    Mlp target_value;  ///< same shape as value; moved only by soft_update_target

    AgentNets() = default;

    template <class Rng>
    AgentNets(std::size_t s, std::size_t a, std::size_t z, const std::vector<std::size_t>& hidden, Rng& rng)
        : state_dim(s), action_dim(a), latent_dim(z) {
        policy = Mlp(MlpSpec{s + z, hidden, 2 * a, Activation::relu, Activation::identity}, rng);
        q1 = Mlp(MlpSpec{s + a + z, hidden, 1, Activation::relu, Activation::identity}, rng);
        q2 = Mlp(MlpSpec{s + a + z, hidden, 1, Activation::relu, Activation::identity}, rng);
        value = Mlp(MlpSpec{s + z, hidden, 1, Activation::relu, Activation::identity}, rng);
        target_value = value;
    }
};

struct PackedBatch {
    Matrix states;
    Matrix actions;
    Matrix rewards;  ///< n x 1
    Matrix next_states;
    Matrix dones;    ///< n x 1, 1.0 where done

    Eigen::Index size() const { return states.rows(); }
};

inline PackedBatch pack_batch(const std::vector<Transition>& batch) {
    if (batch.empty()) throw std::invalid_argument("pack_batch: empty batch");
    const auto n = Eigen::Index(batch.size());
    const auto s = Eigen::Index(batch.front().state.size());
    const auto a = Eigen::Index(batch.front().action.size());
    PackedBatch p{Matrix(n, s), Matrix(n, a), Matrix(n, 1), Matrix(n, s), Matrix(n, 1)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const Transition& t = batch[std::size_t(i)];
        if (Eigen::Index(t.state.size()) != s || Eigen::Index(t.action.size()) != a ||
            Eigen::Index(t.next_state.size()) != s) {
            throw std::invalid_argument("pack_batch: inconsistent transition dimensions");
        }
        for (Eigen::Index j = 0; j < s; ++j) {
            p.states(i, j) = t.state[std::size_t(j)];
            p.next_states(i, j) = t.next_state[std::size_t(j)];
        }
        for (Eigen::Index j = 0; j < a; ++j) p.actions(i, j) = t.action[std::size_t(j)];
        p.rewards(i, 0) = t.reward;
        p.dones(i, 0) = t.done ? 1.0 : 0.0;
    }
    return p;
}

/// Stacks packed batches row-wise, preserving order.
inline PackedBatch stack_batches(const std::vector<PackedBatch>& parts) {
    if (parts.empty()) throw std::invalid_argument("stack_batches: nothing to stack");
    Eigen::Index n = 0;
    for (const auto& p : parts) n += p.size();
    const auto s = parts.front().states.cols();
    const auto a = parts.front().actions.cols();
    PackedBatch out{Matrix(n, s), Matrix(n, a), Matrix(n, 1), Matrix(n, s), Matrix(n, 1)};
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        const auto k = p.size();
        out.states.middleRows(at, k) = p.states;
        out.actions.middleRows(at, k) = p.actions;
        out.rewards.middleRows(at, k) = p.rewards;
        out.next_states.middleRows(at, k) = p.next_states;
        out.dones.middleRows(at, k) = p.dones;
        at += k;
    }
    return out;
}

namespace detail {

/// z may be a single row (shared by the batch) or one row per transition.
inline Var expand_latent(const Var& z, Eigen::Index n) {
    if (z.rows() == n) return z;
    if (z.rows() == 1) return ops::repeat_rows(z, n);
    throw std::invalid_argument("latent rows must be 1 or match the batch");
}

inline Matrix expand_latent(const Matrix& z, Eigen::Index n) {
    if (z.rows() == n) return z;
    if (z.rows() == 1) return z.replicate(n, 1);
    throw std::invalid_argument("latent rows must be 1 or match the batch");
}

}  // namespace detail

struct PolicyOutput {
    Var action;
    Var log_prob;
    Var mean;
    Var log_std;
};

/// Squashed-Gaussian head of the policy on (s, z); noise is n x action_dim.
inline PolicyOutput policy_sample(AgentNets& nets, const Var& states, const Var& z, const Matrix& noise, Tape& tape,
                                  bool trainable = true) {
    const auto a = Eigen::Index(nets.action_dim);
    Var in = ops::concat_cols({states, detail::expand_latent(z, states.rows())});
    Var out = nets.policy.forward(in, tape, trainable);
    Var mean = ops::slice_cols(out, 0, a);
    Var log_std = ops::clamp(ops::slice_cols(out, a, a), kLogStdMin, kLogStdMax);
    SquashedSample s = tanh_gaussian_policy_sample(mean, log_std, noise, tape);
    return {s.action, s.log_prob, mean, log_std};
}

inline Var q_forward(Mlp& q, const Var& states, const Var& actions, const Var& z, Tape& tape, bool trainable) {
    return q.forward(ops::concat_cols({states, actions, detail::expand_latent(z, states.rows())}), tape, trainable);
}

/// Per-row squared Bellman residuals (n x 1), summed over the critics.
/// Gradients reach the critics and, through z, the encoder. The target
/// value network and z_detached are constants.
inline Var critic_terms(AgentNets& nets, const PackedBatch& batch, const Var& z, const Matrix& z_detached,
                        const SacConfig& cfg, Tape& tape) {
    if (batch.size() == 0) throw std::invalid_argument("critic_loss: empty batch");
    const auto n = batch.size();
    Var s = tape.constant(batch.states);
    Var a = tape.constant(batch.actions);
    Var zbar = tape.constant(detail::expand_latent(z_detached, n));

    Var vnext = nets.target_value.forward(ops::concat_cols({tape.constant(batch.next_states), zbar}), tape, false);
    Matrix not_done = (1.0 - batch.dones.array()).matrix();
    Matrix target = batch.rewards + cfg.discount * not_done.cwiseProduct(vnext.value());
    Var y = tape.constant(std::move(target));

    Var terms = ops::square(ops::sub(q_forward(nets.q1, s, a, z, tape, true), y));
    if (cfg.twin_q) terms = ops::add(terms, ops::square(ops::sub(q_forward(nets.q2, s, a, z, tape, true), y)));
    return terms;
}

inline Var critic_loss(AgentNets& nets, const PackedBatch& batch, const Var& z, const Matrix& z_detached,
                       const SacConfig& cfg, Tape& tape) {
    return ops::mean(critic_terms(nets, batch, z, z_detached, cfg, tape));
}

inline Var critic_loss(AgentNets& nets, const std::vector<Transition>& batch, const Var& z, const Matrix& z_detached,
                       const SacConfig& cfg, Tape& tape) {
    if (batch.empty()) throw std::invalid_argument("critic_loss: empty batch");
    return critic_loss(nets, pack_batch(batch), z, z_detached, cfg, tape);
}

struct PolicyTerms {
    Var actor;  ///< n x 1: temperature * log pi(a'|s,z) - Q(s,a',z)
    Var value;  ///< n x 1: (V(s,z) - [Q(s,a',z) - temperature * log pi])^2
};

/// Actor and value per-row terms from one reparameterized action sample.
/// Both condition on the detached latent. The actor gradient reaches only the
/// policy (critics are read as constants); the value gradient reaches only V.
inline PolicyTerms policy_terms(AgentNets& nets, const PackedBatch& batch, const Matrix& z_detached,
                                const Matrix& noise, const SacConfig& cfg, Tape& tape) {
    if (batch.size() == 0) throw std::invalid_argument("actor_loss: empty batch");
    const auto n = batch.size();
    Var s = tape.constant(batch.states);
    Var zbar = tape.constant(detail::expand_latent(z_detached, n));
    PolicyOutput pi = policy_sample(nets, s, zbar, noise, tape, true);

    Var q = q_forward(nets.q1, s, pi.action, zbar, tape, false);
    if (cfg.twin_q) q = ops::minimum(q, q_forward(nets.q2, s, pi.action, zbar, tape, false));
    Var entropy_cost = ops::scale(pi.log_prob, cfg.temperature);
    Var actor = ops::sub(entropy_cost, q);

    Var v = nets.value.forward(ops::concat_cols({s, zbar}), tape, true);
    Var v_target = ops::detach(ops::sub(q, entropy_cost));
    Var value = ops::square(ops::sub(v, v_target));
    return {actor, value};
}

inline Var actor_loss(AgentNets& nets, const PackedBatch& batch, const Matrix& z_detached, const Matrix& noise,
                      const SacConfig& cfg, Tape& tape) {
    return ops::mean(policy_terms(nets, batch, z_detached, noise, cfg, tape).actor);
}

inline Var value_loss(AgentNets& nets, const PackedBatch& batch, const Matrix& z_detached, const Matrix& noise,
                      const SacConfig& cfg, Tape& tape) {
    return ops::mean(policy_terms(nets, batch, z_detached, noise, cfg, tape).value);
}

/// target <- tau * value + (1 - tau) * target
inline void soft_update_target(AgentNets& nets, double tau) {
    auto& tgt = nets.target_value.params.values();
    const auto& src = nets.value.params.values();
    if (tgt.size() != src.size()) throw std::logic_error("soft_update_target: layout mismatch");
    if (tau == 1.0) {
        tgt = src;
        return;
    }
    for (std::size_t i = 0; i < tgt.size(); ++i) tgt[i] = tau * src[i] + (1.0 - tau) * tgt[i];
}

/// Mean and log-std heads of the policy for one state; no tape.
inline std::pair<Matrix, Matrix> policy_heads(const AgentNets& nets, const std::vector<double>& state,
                                              const std::vector<double>& z) {
    if (state.size() != nets.state_dim || z.size() != nets.latent_dim) {
        throw std::invalid_argument("act: state or latent dimension mismatch");
    }
    Matrix in(1, Eigen::Index(nets.state_dim + nets.latent_dim));
    for (std::size_t i = 0; i < state.size(); ++i) in(0, Eigen::Index(i)) = state[i];
    for (std::size_t i = 0; i < z.size(); ++i) in(0, Eigen::Index(state.size() + i)) = z[i];
    Matrix out = nets.policy.eval(in);
    const auto a = Eigen::Index(nets.action_dim);
    Matrix log_std = out.rightCols(a).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
    return {out.leftCols(a), log_std};
}

template <class Rng>
std::vector<double> act(const AgentNets& nets, const std::vector<double>& state, const std::vector<double>& z,
                        bool deterministic, Rng& rng) {
    auto [mean, log_std] = policy_heads(nets, state, z);
    constexpr double kEdge = 1.0 - 1e-12;
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> action(nets.action_dim);
    for (std::size_t j = 0; j < nets.action_dim; ++j) {
        const auto jj = Eigen::Index(j);
        double u = mean(0, jj);
        if (!deterministic) u += std::exp(log_std(0, jj)) * normal(rng);
        action[j] = std::clamp(std::tanh(u), -kEdge, kEdge);
    }
    return action;
}

}  // namespace pearl
