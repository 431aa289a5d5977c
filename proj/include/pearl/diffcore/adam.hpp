#pragma once

#include "pearl/diffcore/param_store.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace pearl {

struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double lr = 3e-4;

    AdamState() = default;
    AdamState(std::size_t n, double learning_rate)
        : first_moment(n, 0.0), second_moment(n, 0.0), lr(learning_rate) {}
};

/// Bias-corrected adaptive-moment update; zeroes the gradients afterwards.
inline void adam_step(ParamStore& params, AdamState& state) {
    const std::size_t n = params.size();
    if (state.first_moment.size() != n || state.second_moment.size() != n) {
        throw std::invalid_argument("adam_step: optimizer state does not match parameter count");
    }
    ++state.step_count;
    const double c1 = 1.0 - std::pow(state.beta1, double(state.step_count));
    const double c2 = 1.0 - std::pow(state.beta2, double(state.step_count));
    auto& v = params.values();
    auto& g = params.grads();
    for (std::size_t i = 0; i < n; ++i) {
        double& m1 = state.first_moment[i];
        double& m2 = state.second_moment[i];
        m1 = state.beta1 * m1 + (1.0 - state.beta1) * g[i];
        m2 = state.beta2 * m2 + (1.0 - state.beta2) * g[i] * g[i];
        const double mhat = m1 / c1;
        const double vhat = m2 / c2;
        v[i] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
        g[i] = 0.0;
    }
}

}  // namespace pearl
