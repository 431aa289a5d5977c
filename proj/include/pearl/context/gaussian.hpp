#pragma once

#include "pearl/diffcore/distributions.hpp"
#include "pearl/diffcore/ops.hpp"
#include "pearl/diffcore/tape.hpp"

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace pearl {

struct DiagonalGaussian {
    std::vector<double> mean;
    std::vector<double> var;

    std::size_t dim() const { return mean.size(); }

    void validate() const {
        if (mean.size() != var.size()) throw std::invalid_argument("DiagonalGaussian: mean/var length differ");
        for (double v : var) {
            if (!(v > 0.0)) throw std::invalid_argument("DiagonalGaussian: variance must be positive");
        }
    }

    bool operator==(const DiagonalGaussian&) const = default;
};

inline DiagonalGaussian unit_prior(std::size_t dim) {
    return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

/// Fuses independent diagonal factors: precisions add, means are
/// precision-weighted.
inline DiagonalGaussian product_of_gaussians(std::span<const DiagonalGaussian> factors) {
    if (factors.empty()) throw std::invalid_argument("product_of_gaussians: no factors");
    const std::size_t d = factors.front().dim();
    std::vector<double> precision(d, 0.0), weighted(d, 0.0);
    for (const auto& f : factors) {
        f.validate();
        if (f.dim() != d) throw std::invalid_argument("product_of_gaussians: dimension mismatch");
        for (std::size_t j = 0; j < d; ++j) {
            precision[j] += 1.0 / f.var[j];
            weighted[j] += f.mean[j] / f.var[j];
        }
    }
    DiagonalGaussian out{std::vector<double>(d), std::vector<double>(d)};
    for (std::size_t j = 0; j < d; ++j) {
        out.var[j] = 1.0 / precision[j];
        out.mean[j] = weighted[j] * out.var[j];
    }
    return out;
}

/// KL(q || N(0, I)) in closed form.
inline double kl_to_prior(const DiagonalGaussian& q) {
    q.validate();
    double kl = 0.0;
    for (std::size_t j = 0; j < q.dim(); ++j) {
        kl += q.var[j] + q.mean[j] * q.mean[j] - 1.0 - std::log(q.var[j]);
    }
    return 0.5 * kl;
}

/// Differentiable posterior (1 x latent_dim). A point estimate carries a
/// variance of exactly zero and is sampled as its mean.
struct GaussianVar {
    Var mean;
    Var var;
    bool point_estimate = false;

    DiagonalGaussian value() const {
        const Matrix& m = mean.value();
        const Matrix& v = var.value();
        return {std::vector<double>(m.data(), m.data() + m.size()), std::vector<double>(v.data(), v.data() + v.size())};
    }
};

/// Per-transition factors, one row each (n x latent_dim).
struct FactorSet {
    Var means;
    Var vars;

    std::size_t size() const { return std::size_t(means.rows()); }

    std::vector<DiagonalGaussian> values() const {
        std::vector<DiagonalGaussian> out;
        const Matrix& m = means.value();
        const Matrix& v = vars.value();
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            DiagonalGaussian g;
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                g.mean.push_back(m(i, j));
                g.var.push_back(v(i, j));
            }
            out.push_back(std::move(g));
        }
        return out;
    }
};

inline GaussianVar prior_var(std::size_t dim, Tape& tape) {
    return {tape.constant(Matrix::Zero(1, Eigen::Index(dim))), tape.constant(Matrix::Ones(1, Eigen::Index(dim))), false};
}

inline GaussianVar product_of_gaussians(const FactorSet& factors) {
    if (factors.size() == 0) throw std::invalid_argument("product_of_gaussians: no factors");
    Var precision = ops::reciprocal(factors.vars);
    Var total_precision = ops::col_sum(precision);
    Var weighted = ops::col_sum(ops::mul(factors.means, precision));
    Var var = ops::reciprocal(total_precision);
    Var mean = ops::mul(weighted, var);
    return {mean, var, false};
}

inline Var kl_to_prior(const GaussianVar& q) {
    if (q.point_estimate) return ops::scale(ops::sum(ops::square(q.mean)), 0.5);
    Var terms = ops::sub(ops::add(q.var, ops::square(q.mean)), ops::log(q.var));
    return ops::scale(ops::sum(ops::add_scalar(terms, -1.0)), 0.5);
}

/// Reparameterized z; `noise` is 1 x latent_dim standard normal.
inline Var sample_latent(const GaussianVar& q, const Matrix& noise, Tape& tape) {
    if (q.point_estimate) return q.mean;
    return reparam_sample(q.mean, q.var, noise, tape);
}

}  // namespace pearl
