#pragma once

#include "pearl/diffcore/ops.hpp"
#include "pearl/diffcore/param_store.hpp"
#include "pearl/diffcore/tape.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pearl {

enum class Activation { identity, relu, tanh };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

struct MlpSpec {
    std::size_t input_dim = 1;
    std::vector<std::size_t> hidden_dims{64, 64, 64};
    std::size_t output_dim = 1;
    Activation hidden_activation = Activation::relu;
    Activation output_activation = Activation::identity;

    void validate() const {
        if (input_dim == 0 || output_dim == 0) throw std::invalid_argument("MlpSpec: dims must be >= 1");
        for (auto h : hidden_dims) {
            if (h == 0) throw std::invalid_argument("MlpSpec: hidden dims must be >= 1");
        }
        if (hidden_activation == Activation::identity) {
            throw std::invalid_argument("MlpSpec: hidden activation must be relu or tanh");
        }
        if (output_activation == Activation::relu) {
            throw std::invalid_argument("MlpSpec: output activation must be identity or tanh");
        }
    }

    std::size_t layer_count() const { return hidden_dims.size() + 1; }
};

/// Appends "<prefix>l{i}.w" (in x out) and "<prefix>l{i}.b" (1 x out) for
/// every layer; returns the index of the first slice.
inline std::size_t append_mlp_params(ParamStore& store, const MlpSpec& spec, const std::string& prefix = "") {
    spec.validate();
    const std::size_t first = store.slice_count();
    std::size_t in = spec.input_dim;
    for (std::size_t i = 0; i < spec.layer_count(); ++i) {
        const std::size_t out = i < spec.hidden_dims.size() ? spec.hidden_dims[i] : spec.output_dim;
        store.add_slice(prefix + "l" + std::to_string(i) + ".w", in, out);
        store.add_slice(prefix + "l" + std::to_string(i) + ".b", 1, out);
        in = out;
    }
    return first;
}

inline ParamStore make_mlp_params(const MlpSpec& spec) {
    ParamStore store;
    append_mlp_params(store, spec);
    return store;
}

/// Uniform fan-in init for hidden layers; the output layer gets +-final_scale.
template <class Rng>
void init_mlp_params(const MlpSpec& spec, ParamStore& store, Rng& rng, double final_scale = 3e-3,
                     std::size_t first_slice = 0) {
    for (std::size_t i = 0; i < spec.layer_count(); ++i) {
        auto w = store.value(first_slice + 2 * i);
        auto b = store.value(first_slice + 2 * i + 1);
        const bool last = i + 1 == spec.layer_count();
        const double bound = last ? final_scale : 1.0 / std::sqrt(double(w.rows()));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (Eigen::Index k = 0; k < w.size(); ++k) w(k) = u(rng);
        for (Eigen::Index k = 0; k < b.size(); ++k) b(k) = last ? u(rng) : 0.0;
    }
}

inline Var apply_activation(const Var& x, Activation a) {
    switch (a) {
        case Activation::identity: return x;
        case Activation::relu: return ops::relu(x);
        case Activation::tanh: return ops::tanh(x);
    }
    return x;
}

/// Batched forward pass; `input` is n x input_dim.
inline Var mlp_forward(const MlpSpec& spec, ParamStore& params, const Var& input, Tape& tape,
                       bool trainable = true, std::size_t first_slice = 0) {
    if (input.tape() != &tape) throw std::invalid_argument("mlp_forward: input on a different tape");
    if (std::size_t(input.cols()) != spec.input_dim) {
        throw std::invalid_argument("mlp_forward: input has " + std::to_string(input.cols()) +
                                    " columns, expected " + std::to_string(spec.input_dim));
    }
    if (params.slice_count() < first_slice + 2 * spec.layer_count()) {
        throw std::invalid_argument("mlp_forward: parameter layout does not match spec");
    }
    Var h = input;
    for (std::size_t i = 0; i < spec.layer_count(); ++i) {
        const auto wi = first_slice + 2 * i;
        if (params.slice(wi).rows != std::size_t(h.cols())) {
            throw std::invalid_argument("mlp_forward: layer " + std::to_string(i) + " shape mismatch");
        }
        Var w = tape.param(params, wi, trainable);
        Var b = tape.param(params, wi + 1, trainable);
        h = ops::linear(h, w, b);
        const bool last = i + 1 == spec.layer_count();
        h = apply_activation(h, last ? spec.output_activation : spec.hidden_activation);
    }
    return h;
}

/// Tape-free forward pass used for rollouts.
inline Matrix mlp_eval(const MlpSpec& spec, const ParamStore& params, const Matrix& input,
                       std::size_t first_slice = 0) {
    if (std::size_t(input.cols()) != spec.input_dim) throw std::invalid_argument("mlp_eval: input dim mismatch");
    Matrix h = input;
    for (std::size_t i = 0; i < spec.layer_count(); ++i) {
        Matrix next = h * params.value(first_slice + 2 * i);
        next.rowwise() += params.value(first_slice + 2 * i + 1).row(0);
        const bool last = i + 1 == spec.layer_count();
        switch (last ? spec.output_activation : spec.hidden_activation) {
            case Activation::identity: break;
            case Activation::relu: next = next.cwiseMax(0.0); break;
            case Activation::tanh: next = next.array().tanh().matrix(); break;
        }
        h = std::move(next);
    }
    return h;
}

/// A network: its shape plus the parameters it owns.
struct Mlp {
    MlpSpec spec;
    ParamStore params;

    Mlp() = default;
    explicit Mlp(MlpSpec s) : spec(std::move(s)), params(make_mlp_params(spec)) {}

    template <class Rng>
    Mlp(MlpSpec s, Rng& rng, double final_scale = 3e-3) : Mlp(std::move(s)) {
        init_mlp_params(spec, params, rng, final_scale);
    }

    Var forward(const Var& input, Tape& tape, bool trainable = true) {
        return mlp_forward(spec, params, input, tape, trainable);
    }
    Matrix eval(const Matrix& input) const { return mlp_eval(spec, params, input); }
};

}  // namespace pearl
