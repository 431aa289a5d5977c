#pragma once

#include "pearl/diffcore/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pearl::ops {

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b) {
    if (!a.valid() || a.tape() != b.tape()) throw std::invalid_argument("ops: operands on different tapes");
    return *a.tape();
}

inline Eigen::Index broadcast_dim(Eigen::Index a, Eigen::Index b, const char* what) {
    if (a == b) return a;
    if (a == 1) return b;
    if (b == 1) return a;
    throw std::invalid_argument(std::string("ops: incompatible shapes in ") + what);
}

inline Matrix expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
    if (m.rows() == rows && m.cols() == cols) return m;
    return m.replicate(rows / m.rows(), cols / m.cols());
}

/// Sums a broadcast gradient back down to shape rows x cols.
inline Matrix reduce(const Matrix& g, Eigen::Index rows, Eigen::Index cols) {
    if (g.rows() == rows && g.cols() == cols) return g;
    if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
    if (rows == 1) return g.colwise().sum();
    return g.rowwise().sum();
}

inline void accumulate(Tape& t, std::size_t id, const Matrix& g) {
    if (!t.requires_grad(id)) return;
    const Matrix& v = t.value(id);
    t.grad_of(id) += reduce(g, v.rows(), v.cols());
}

/// Unary elementwise op with derivative expressed through input x, output y.
template <class F, class D>
Var unary(const Var& a, F f, D dfdx) {
    Tape& t = *a.tape();
    Matrix y = a.value().unaryExpr(f);
    const std::size_t ia = a.id();
    return t.push(std::move(y), a.requires_grad(), [ia, dfdx](Tape& tp, std::size_t self) {
        const Matrix& x = tp.value(ia);
        const Matrix& out = tp.value(self);
        Matrix g = tp.grad(self);
        for (Eigen::Index i = 0; i < g.size(); ++i) g(i) *= dfdx(x(i), out(i));
        tp.grad_of(ia) += g;
    });
}

inline double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

inline Var detach(const Var& a) { return a.tape()->constant(a.value()); }

inline Var add(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    const auto r = detail::broadcast_dim(a.rows(), b.rows(), "add");
    const auto c = detail::broadcast_dim(a.cols(), b.cols(), "add");
    Matrix y = detail::expand(a.value(), r, c) + detail::expand(b.value(), r, c);
    const auto ia = a.id(), ib = b.id();
    return t.push(std::move(y), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& tp, std::size_t self) {
        const Matrix g = tp.grad(self);
        detail::accumulate(tp, ia, g);
        detail::accumulate(tp, ib, g);
    });
}

inline Var sub(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    const auto r = detail::broadcast_dim(a.rows(), b.rows(), "sub");
    const auto c = detail::broadcast_dim(a.cols(), b.cols(), "sub");
    Matrix y = detail::expand(a.value(), r, c) - detail::expand(b.value(), r, c);
    const auto ia = a.id(), ib = b.id();
    return t.push(std::move(y), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& tp, std::size_t self) {
        const Matrix g = tp.grad(self);
        detail::accumulate(tp, ia, g);
        detail::accumulate(tp, ib, -g);
    });
}

/// Elementwise product with broadcasting.
inline Var mul(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    const auto r = detail::broadcast_dim(a.rows(), b.rows(), "mul");
    const auto c = detail::broadcast_dim(a.cols(), b.cols(), "mul");
    Matrix y = detail::expand(a.value(), r, c).cwiseProduct(detail::expand(b.value(), r, c));
    const auto ia = a.id(), ib = b.id();
    return t.push(std::move(y), a.requires_grad() || b.requires_grad(), [ia, ib, r, c](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        if (tp.requires_grad(ia)) detail::accumulate(tp, ia, g.cwiseProduct(detail::expand(tp.value(ib), r, c)));
        if (tp.requires_grad(ib)) detail::accumulate(tp, ib, g.cwiseProduct(detail::expand(tp.value(ia), r, c)));
    });
}

/// Elementwise quotient with broadcasting.
inline Var div(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    const auto r = detail::broadcast_dim(a.rows(), b.rows(), "div");
    const auto c = detail::broadcast_dim(a.cols(), b.cols(), "div");
    Matrix y = detail::expand(a.value(), r, c).cwiseQuotient(detail::expand(b.value(), r, c));
    const auto ia = a.id(), ib = b.id();
    return t.push(std::move(y), a.requires_grad() || b.requires_grad(), [ia, ib, r, c](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        const Matrix bv = detail::expand(tp.value(ib), r, c);
        if (tp.requires_grad(ia)) detail::accumulate(tp, ia, g.cwiseQuotient(bv));
        if (tp.requires_grad(ib)) {
            const Matrix& y = tp.value(self);
            detail::accumulate(tp, ib, -g.cwiseProduct(y).cwiseQuotient(bv));
        }
    });
}

inline Var scale(const Var& a, double s) {
    Tape& t = *a.tape();
    const auto ia = a.id();
    return t.push(a.value() * s, a.requires_grad(), [ia, s](Tape& tp, std::size_t self) {
        tp.grad_of(ia) += tp.grad(self) * s;
    });
}

inline Var add_scalar(const Var& a, double s) {
    Tape& t = *a.tape();
    const auto ia = a.id();
    return t.push((a.value().array() + s).matrix(), a.requires_grad(), [ia](Tape& tp, std::size_t self) {
        tp.grad_of(ia) += tp.grad(self);
    });
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

/// x (n x in) * w (in x out) + b (1 x out)
inline Var linear(const Var& x, const Var& w, const Var& b) {
    Tape& t = detail::same_tape(x, w);
    if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
        throw std::invalid_argument("linear: shape mismatch (" + std::to_string(x.rows()) + "x" +
                                    std::to_string(x.cols()) + " * " + std::to_string(w.rows()) + "x" +
                                    std::to_string(w.cols()) + ")");
    }
    Matrix y = x.value() * w.value();
    y.rowwise() += b.value().row(0);
    const auto ix = x.id(), iw = w.id(), ib = b.id();
    const bool rg = x.requires_grad() || w.requires_grad() || b.requires_grad();
    return t.push(std::move(y), rg, [ix, iw, ib](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        if (tp.requires_grad(ix)) tp.grad_of(ix).noalias() += g * tp.value(iw).transpose();
        if (tp.requires_grad(iw)) tp.grad_of(iw).noalias() += tp.value(ix).transpose() * g;
        if (tp.requires_grad(ib)) tp.grad_of(ib) += g.colwise().sum();
    });
}

inline Var matmul(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
    const auto ia = a.id(), ib = b.id();
    return t.push(a.value() * b.value(), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        if (tp.requires_grad(ia)) tp.grad_of(ia).noalias() += g * tp.value(ib).transpose();
        if (tp.requires_grad(ib)) tp.grad_of(ib).noalias() += tp.value(ia).transpose() * g;
    });
}

inline Var relu(const Var& a) {
    return detail::unary(
        a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Var tanh(const Var& a) {
    return detail::unary(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var exp(const Var& a) {
    return detail::unary(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(const Var& a) {
    return detail::unary(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var sqrt(const Var& a) {
    return detail::unary(
        a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

inline Var square(const Var& a) {
    return detail::unary(
        a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Var reciprocal(const Var& a) {
    return detail::unary(
        a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

inline Var softplus(const Var& a) {
    return detail::unary(a, detail::stable_softplus, [](double x, double) { return detail::sigmoid(x); });
}

/// Clamp into [lo, hi]; gradient passes only where the input is inside.
inline Var clamp(const Var& a, double lo, double hi) {
    return detail::unary(
        a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

inline Var clamp_min(const Var& a, double lo) { return clamp(a, lo, std::numeric_limits<double>::infinity()); }

/// Elementwise minimum; ties route the gradient to `a`.
inline Var minimum(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("minimum: shape mismatch");
    Matrix y = a.value().cwiseMin(b.value());
    const auto ia = a.id(), ib = b.id();
    return t.push(std::move(y), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        const Matrix& av = tp.value(ia);
        const Matrix& bv = tp.value(ib);
        if (tp.requires_grad(ia)) tp.grad_of(ia) += (av.array() <= bv.array()).cast<double>().matrix().cwiseProduct(g);
        if (tp.requires_grad(ib)) tp.grad_of(ib) += (av.array() > bv.array()).cast<double>().matrix().cwiseProduct(g);
    });
}

inline Var sum(const Var& a) {
    Tape& t = *a.tape();
    const auto ia = a.id();
    return t.push(Matrix::Constant(1, 1, a.value().sum()), a.requires_grad(), [ia](Tape& tp, std::size_t self) {
        tp.grad_of(ia).array() += tp.grad(self)(0, 0);
    });
}

inline Var mean(const Var& a) {
    if (a.value().size() == 0) throw std::invalid_argument("mean: empty operand");
    return scale(sum(a), 1.0 / double(a.value().size()));
}

/// Per-row sum: n x c -> n x 1.
inline Var row_sum(const Var& a) {
    Tape& t = *a.tape();
    const auto ia = a.id();
    return t.push(a.value().rowwise().sum(), a.requires_grad(), [ia](Tape& tp, std::size_t self) {
        tp.grad_of(ia).colwise() += tp.grad(self).col(0);
    });
}

/// Per-column sum: n x c -> 1 x c.
inline Var col_sum(const Var& a) {
    Tape& t = *a.tape();
    const auto ia = a.id();
    return t.push(a.value().colwise().sum(), a.requires_grad(), [ia](Tape& tp, std::size_t self) {
        tp.grad_of(ia).rowwise() += tp.grad(self).row(0);
    });
}

inline Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
    Tape& t = *parts[0].tape();
    const auto rows = parts[0].rows();
    Eigen::Index cols = 0;
    bool rg = false;
    for (const Var& p : parts) {
        if (p.tape() != &t || p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += p.cols();
        rg = rg || p.requires_grad();
    }
    Matrix y(rows, cols);
    std::vector<std::pair<std::size_t, Eigen::Index>> layout;
    Eigen::Index at = 0;
    for (const Var& p : parts) {
        y.middleCols(at, p.cols()) = p.value();
        layout.emplace_back(p.id(), at);
        at += p.cols();
    }
    return t.push(std::move(y), rg, [layout](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        for (auto [id, off] : layout) {
            if (tp.requires_grad(id)) tp.grad_of(id) += g.middleCols(off, tp.value(id).cols());
        }
    });
}

inline Var concat_cols(std::initializer_list<Var> parts) {
    return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

inline Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no operands");
    Tape& t = *parts[0].tape();
    const auto cols = parts[0].cols();
    Eigen::Index rows = 0;
    bool rg = false;
    for (const Var& p : parts) {
        if (p.tape() != &t || p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
        rows += p.rows();
        rg = rg || p.requires_grad();
    }
    Matrix y(rows, cols);
    std::vector<std::pair<std::size_t, Eigen::Index>> layout;
    Eigen::Index at = 0;
    for (const Var& p : parts) {
        y.middleRows(at, p.rows()) = p.value();
        layout.emplace_back(p.id(), at);
        at += p.rows();
    }
    return t.push(std::move(y), rg, [layout](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        for (auto [id, off] : layout) {
            if (tp.requires_grad(id)) tp.grad_of(id) += g.middleRows(off, tp.value(id).rows());
        }
    });
}

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols");
    Tape& t = *a.tape();
    const auto ia = a.id();
    return t.push(a.value().middleCols(start, count), a.requires_grad(), [ia, start, count](Tape& tp, std::size_t self) {
        tp.grad_of(ia).middleCols(start, count) += tp.grad(self);
    });
}

inline Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("slice_rows");
    Tape& t = *a.tape();
    const auto ia = a.id();
    return t.push(a.value().middleRows(start, count), a.requires_grad(), [ia, start, count](Tape& tp, std::size_t self) {
        tp.grad_of(ia).middleRows(start, count) += tp.grad(self);
    });
}

/// 1 x c -> n x c
inline Var repeat_rows(const Var& a, Eigen::Index n) {
    if (a.rows() != 1) throw std::invalid_argument("repeat_rows: operand must be a single row");
    Tape& t = *a.tape();
    const auto ia = a.id();
    return t.push(a.value().replicate(n, 1), a.requires_grad(), [ia](Tape& tp, std::size_t self) {
        tp.grad_of(ia) += tp.grad(self).colwise().sum();
    });
}

}  // namespace pearl::ops
