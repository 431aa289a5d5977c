#pragma once

#include "pearl/context/gaussian.hpp"
#include "pearl/diffcore/mlp.hpp"
#include "pearl/diffcore/ops.hpp"
#include "pearl/envsuite/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pearl {

struct ContextBatch {
    std::vector<Transition> transitions;
    int task_id = 0;

    bool empty() const { return transitions.empty(); }
    std::size_t size() const { return transitions.size(); }
};

enum class EncoderVariant { perm_invariant, recurrent, deterministic };

inline const char* to_string(EncoderVariant v) {
    switch (v) {
        case EncoderVariant::perm_invariant: return "perm_invariant";
        case EncoderVariant::recurrent: return "recurrent";
        case EncoderVariant::deterministic: return "deterministic";
    }
    return "?";
}

inline EncoderVariant encoder_variant_from_string(const std::string& s) {
    if (s == "perm_invariant") return EncoderVariant::perm_invariant;
    if (s == "recurrent") return EncoderVariant::recurrent;
    if (s == "deterministic") return EncoderVariant::deterministic;
    throw std::invalid_argument("unknown encoder variant '" + s + "'");
}

struct EncoderConfig {
    std::size_t latent_dim = 5;
    std::vector<std::size_t> hidden_dims{64, 64, 64};
    EncoderVariant variant = EncoderVariant::perm_invariant;
    bool include_next_state = false;
    bool shared_trunk = true;
    bool prior_in_product = false;
    std::size_t recurrent_hidden = 64;
    std::size_t bptt_window = 100;
};

/// Amortized inference network q(z | c).
///
/// Feedforward variants map each transition (s, a, r[, s']) to a Gaussian
/// factor and fuse the factors by product of Gaussians. The recurrent variant
/// runs an Elman cell over the ordered context and reads the final hidden
/// state out into a single Gaussian.
class ContextEncoder {
public:
    ContextEncoder() = default;

    template <class Rng>
    ContextEncoder(const EncoderConfig& cfg, std::size_t state_dim, std::size_t action_dim, Rng& rng)
        : cfg_(cfg), state_dim_(state_dim), action_dim_(action_dim) {
        if (cfg_.latent_dim == 0) throw std::invalid_argument("ContextEncoder: latent_dim must be >= 1");
        const std::size_t in = input_dim();
        const std::size_t latent = cfg_.latent_dim;
        if (cfg_.variant == EncoderVariant::recurrent) {
            const std::size_t h = cfg_.recurrent_hidden;
            if (h == 0 || cfg_.bptt_window == 0) throw std::invalid_argument("ContextEncoder: bad recurrent config");
            cell_wx_ = params_.add_slice("rnn.wx", in, h);
            cell_wh_ = params_.add_slice("rnn.wh", h, h);
            cell_b_ = params_.add_slice("rnn.b", 1, h);
            readout_w_ = params_.add_slice("readout.w", h, 2 * latent);
            readout_b_ = params_.add_slice("readout.b", 1, 2 * latent);
            std::uniform_real_distribution<double> ux(-1.0 / std::sqrt(double(in)), 1.0 / std::sqrt(double(in)));
            std::uniform_real_distribution<double> uh(-1.0 / std::sqrt(double(h)), 1.0 / std::sqrt(double(h)));
            fill(params_.value(cell_wx_), ux, rng);
            fill(params_.value(cell_wh_), uh, rng);
            fill(params_.value(readout_w_), uh, rng);
        } else if (cfg_.shared_trunk) {
            trunk_spec_ = MlpSpec{in, cfg_.hidden_dims, 2 * latent, Activation::relu, Activation::identity};
            trunk_first_ = append_mlp_params(params_, trunk_spec_, "trunk.");
            init_mlp_params(trunk_spec_, params_, rng, 3e-3, trunk_first_);
        } else {
            trunk_spec_ = MlpSpec{in, cfg_.hidden_dims, latent, Activation::relu, Activation::identity};
            trunk_first_ = append_mlp_params(params_, trunk_spec_, "mean.");
            var_first_ = append_mlp_params(params_, trunk_spec_, "var.");
            init_mlp_params(trunk_spec_, params_, rng, 3e-3, trunk_first_);
            init_mlp_params(trunk_spec_, params_, rng, 3e-3, var_first_);
        }
    }

    const EncoderConfig& config() const { return cfg_; }
    std::size_t latent_dim() const { return cfg_.latent_dim; }
    std::size_t input_dim() const {
        return state_dim_ + action_dim_ + 1 + (cfg_.include_next_state ? state_dim_ : 0);
    }
    bool deterministic() const { return cfg_.variant == EncoderVariant::deterministic; }
    bool recurrent() const { return cfg_.variant == EncoderVariant::recurrent; }

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    /// One row per transition: (s, a, r_observed[, s']).
    Matrix pack_inputs(const std::vector<Transition>& ts) const {
        Matrix x(Eigen::Index(ts.size()), Eigen::Index(input_dim()));
        for (std::size_t i = 0; i < ts.size(); ++i) {
            const Transition& t = ts[i];
            if (t.state.size() != state_dim_ || t.action.size() != action_dim_) {
                throw std::invalid_argument("ContextEncoder: transition dimension mismatch");
            }
            Eigen::Index c = 0;
            for (double v : t.state) x(Eigen::Index(i), c++) = v;
            for (double v : t.action) x(Eigen::Index(i), c++) = v;
            x(Eigen::Index(i), c++) = t.context_reward;
            if (cfg_.include_next_state) {
                for (double v : t.next_state) x(Eigen::Index(i), c++) = v;
            }
        }
        return x;
    }

    /// Gaussian factor per transition, in input order. Variances go through
    /// softplus and are floored at kVarianceFloor.
    FactorSet encode_factors(const ContextBatch& ctx, Tape& tape, bool trainable = true) {
        if (ctx.empty()) throw std::invalid_argument("encode_factors: empty context");
        if (recurrent()) throw std::logic_error("encode_factors: recurrent encoder has no per-transition factors");
        Var x = tape.constant(pack_inputs(ctx.transitions));
        const auto latent = Eigen::Index(cfg_.latent_dim);
        Var mean, pre_var;
        if (cfg_.shared_trunk) {
            Var out = mlp_forward(trunk_spec_, params_, x, tape, trainable, trunk_first_);
            mean = ops::slice_cols(out, 0, latent);
            pre_var = ops::slice_cols(out, latent, latent);
        } else {
            mean = mlp_forward(trunk_spec_, params_, x, tape, trainable, trunk_first_);
            pre_var = mlp_forward(trunk_spec_, params_, x, tape, trainable, var_first_);
        }
        return {mean, ops::clamp_min(ops::softplus(pre_var), kVarianceFloor)};
    }

    /// q(z | c). The empty context yields the unit prior (a zero point
    /// estimate for the deterministic variant).
    GaussianVar posterior(const ContextBatch& ctx, Tape& tape, bool trainable = true) {
        const auto d = Eigen::Index(cfg_.latent_dim);
        if (ctx.empty()) {
            if (deterministic()) {
                return {tape.constant(Matrix::Zero(1, d)), tape.constant(Matrix::Zero(1, d)), true};
            }
            return prior_var(cfg_.latent_dim, tape);
        }
        if (recurrent()) return encode_recurrent(ctx, tape, trainable);

        FactorSet f = encode_factors(ctx, tape, trainable);
        if (cfg_.prior_in_product) {
            Var pm = tape.constant(Matrix::Zero(1, d));
            Var pv = tape.constant(Matrix::Ones(1, d));
            f = {ops::concat_rows(std::vector<Var>{f.means, pm}), ops::concat_rows(std::vector<Var>{f.vars, pv})};
        }
        GaussianVar q = product_of_gaussians(f);
        if (deterministic()) {
            q.var = tape.constant(Matrix::Zero(1, d));
            q.point_estimate = true;
        }
        return q;
    }

    /// Tape-free posterior for rollouts.
    DiagonalGaussian infer(const ContextBatch& ctx) {
        Tape tape;
        return posterior(ctx, tape, false).value();
    }

    /// Elman recurrence over the ordered context. Only the last bptt_window
    /// steps are recorded on the tape; earlier steps feed in as a constant
    /// hidden state.
    GaussianVar encode_recurrent(const ContextBatch& traj, Tape& tape, bool trainable = true) {
        if (traj.empty()) return prior_var(cfg_.latent_dim, tape);
        return encode_recurrent_from(tape.constant(pack_inputs(traj.transitions)), tape, trainable);
    }

    /// encode_recurrent over an already packed n x input_dim matrix.
    GaussianVar encode_recurrent_from(const Var& inputs, Tape& tape, bool trainable = true) {
        if (!recurrent()) throw std::logic_error("encode_recurrent: encoder is not recurrent");
        const auto d = Eigen::Index(cfg_.latent_dim);
        const Eigen::Index n = inputs.rows();
        const Eigen::Index window = std::min<Eigen::Index>(n, Eigen::Index(cfg_.bptt_window));
        const Eigen::Index cut = n - window;

        Matrix h0 = Matrix::Zero(1, Eigen::Index(cfg_.recurrent_hidden));
        for (Eigen::Index t = 0; t < cut; ++t) {
            Matrix pre = inputs.value().row(t) * params_.value(cell_wx_) + h0 * params_.value(cell_wh_);
            pre += params_.value(cell_b_);
            h0 = pre.array().tanh().matrix();
        }

        Var wx = tape.param(params_, cell_wx_, trainable);
        Var wh = tape.param(params_, cell_wh_, trainable);
        Var b = tape.param(params_, cell_b_, trainable);
        Var xw = ops::linear(ops::slice_rows(inputs, cut, window), wx, b);
        Var h = tape.constant(h0);
        for (Eigen::Index t = 0; t < window; ++t) {
            h = ops::tanh(ops::add(ops::slice_rows(xw, t, 1), ops::matmul(h, wh)));
        }
        Var out = ops::linear(h, tape.param(params_, readout_w_, trainable), tape.param(params_, readout_b_, trainable));
        Var mean = ops::slice_cols(out, 0, d);
        Var var = ops::clamp_min(ops::softplus(ops::slice_cols(out, d, d)), kVarianceFloor);
        return {mean, var, false};
    }

private:
    template <class Map, class Dist, class Rng>
    static void fill(Map m, Dist& dist, Rng& rng) {
        for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = dist(rng);
    }

    EncoderConfig cfg_;
    std::size_t state_dim_ = 0;
    std::size_t action_dim_ = 0;
    ParamStore params_;
    MlpSpec trunk_spec_;
    std::size_t trunk_first_ = 0;
    std::size_t var_first_ = 0;
    std::size_t cell_wx_ = 0, cell_wh_ = 0, cell_b_ = 0, readout_w_ = 0, readout_b_ = 0;
};

}  // namespace pearl
