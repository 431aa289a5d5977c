#pragma once

#include "pearl/diffcore/param_store.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pearl {

class Tape;

/// Handle to a matrix-valued node recorded on a Tape.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    double scalar() const;
    bool requires_grad() const;

    Tape* tape() const { return tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Records matrix operations for a single reverse sweep.
///
/// Parameters enter as leaves bound to a ParamStore slice; the reverse sweep
/// accumulates into that store's grads. Leaves created with trainable=false
/// behave as constants for their store but still pass gradients through to
/// other inputs of the operations that consume them.
class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t)>;

    Tape() { nodes_.reserve(256); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value) { return push(std::move(value), false, nullptr); }

    Var constant_scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

    Var param(ParamStore& store, std::size_t slice, bool trainable = true) {
        Matrix v = store.value(slice);
        if (!trainable) return constant(std::move(v));
        ParamStore* sp = &store;
        return push(std::move(v), true, [sp, slice](Tape& t, std::size_t self) {
            sp->grad(slice) += t.nodes_[self].grad;
        });
    }

    /// Appends a node. `backward` reads this node's grad and accumulates into
    /// its inputs through `grad_of`.
    Var push(Matrix value, bool requires_grad, Backward backward) {
        ensure_open();
        nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(backward)});
        return Var(this, nodes_.size() - 1);
    }

    const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

    /// Gradient slot of node `id`, zero-initialised on first access.
    Matrix& grad_of(std::size_t id) {
        Node& n = nodes_[id];
        if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }
    const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }

    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    void backward(const Var& loss) {
        if (loss.tape() != this) throw std::invalid_argument("backward: loss is not on this tape");
        ensure_open();
        const Node& root = nodes_[loss.id()];
        if (root.value.rows() != 1 || root.value.cols() != 1) {
            throw std::invalid_argument("backward: root must be a 1x1 scalar, got " +
                                        std::to_string(root.value.rows()) + "x" +
                                        std::to_string(root.value.cols()));
        }
        consumed_ = true;
        if (!root.requires_grad) return;
        grad_of(loss.id()).setOnes();
        for (std::size_t i = loss.id() + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
            n.backward(*this, i);
        }
    }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        Backward backward;
    };

    void ensure_open() const {
        if (consumed_) throw std::logic_error("Tape: already consumed by backward()");
    }

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

inline const Matrix& Var::value() const {
    if (!tape_) throw std::logic_error("Var: uninitialised");
    return tape_->value(id_);
}

inline double Var::scalar() const {
    const Matrix& v = value();
    if (v.rows() != 1 || v.cols() != 1) throw std::invalid_argument("Var::scalar on non-scalar");
    return v(0, 0);
}

inline bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

}  // namespace pearl
