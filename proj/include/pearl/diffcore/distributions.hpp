#pragma once

#include "pearl/diffcore/ops.hpp"
#include "pearl/diffcore/tape.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pearl {

inline constexpr double kVarianceFloor = 1e-6;
inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

/// mean + sqrt(var) * noise. Noise enters as a constant, so gradients reach
/// only mean and var.
inline Var reparam_sample(const Var& mean, const Var& var, const Matrix& noise, Tape& tape) {
    if (mean.tape() != &tape || var.tape() != &tape) throw std::invalid_argument("reparam_sample: foreign tape");
    if (var.value().minCoeff() <= 0.0) throw std::invalid_argument("reparam_sample: variance must be positive");
    if (noise.rows() != mean.rows() || noise.cols() != mean.cols() || var.rows() != mean.rows() ||
        var.cols() != mean.cols()) {
        throw std::invalid_argument("reparam_sample: shape mismatch");
    }
    Var eps = tape.constant(noise);
    return ops::add(mean, ops::mul(ops::sqrt(var), eps));
}

struct SquashedSample {
    Var action;    ///< n x d, strictly inside (-1, 1)
    Var log_prob;  ///< n x 1
};

/// Reparameterized tanh-squashed diagonal Gaussian.
///
/// log_prob = sum_j [log N(u_j; mean_j, std_j) - log(1 - tanh(u_j)^2)], with
/// log(1 - tanh(u)^2) evaluated as 2 (log 2 - u - softplus(-2u)).
inline SquashedSample tanh_gaussian_policy_sample(const Var& mean, const Var& log_std, const Matrix& noise,
                                                  Tape& tape) {
    if (noise.rows() != mean.rows() || noise.cols() != mean.cols() || log_std.rows() != mean.rows() ||
        log_std.cols() != mean.cols()) {
        throw std::invalid_argument("tanh_gaussian_policy_sample: shape mismatch");
    }
    Var eps = tape.constant(noise);
    Var pre = ops::add(mean, ops::mul(ops::exp(log_std), eps));
    // tanh rounds to +-1 for |pre| > ~19; keep actions strictly inside the box.
    constexpr double kEdge = 1.0 - 1e-12;
    Var action = ops::clamp(ops::tanh(pre), -kEdge, kEdge);

    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    Matrix base = (-0.5 * noise.array().square() - half_log_2pi).matrix();
    Var gauss = ops::sub(tape.constant(base), log_std);
    Var log_det = ops::scale(
        ops::add_scalar(ops::neg(ops::add(pre, ops::softplus(ops::scale(pre, -2.0)))), std::log(2.0)), 2.0);
    Var log_prob = ops::row_sum(ops::sub(gauss, log_det));
    return {action, log_prob};
}

}  // namespace pearl
