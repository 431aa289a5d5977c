#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace pearl {

using Matrix = Eigen::MatrixXd;

/// Flat parameter vector with a matching gradient vector, partitioned into
/// named column-major matrix slices (layer weights and biases).
class ParamStore {
public:
    struct Slice {
        std::string name;
        std::size_t offset = 0;
        std::size_t rows = 0;
        std::size_t cols = 0;
        std::size_t size() const { return rows * cols; }
    };

    using MatrixMap = Eigen::Map<Matrix>;
    using ConstMatrixMap = Eigen::Map<const Matrix>;

    std::size_t add_slice(std::string name, std::size_t rows, std::size_t cols) {
        if (rows == 0 || cols == 0) {
            throw std::invalid_argument("ParamStore: empty slice '" + name + "'");
        }
        Slice s{std::move(name), values_.size(), rows, cols};
        values_.resize(values_.size() + s.size(), 0.0);
        grads_.resize(values_.size(), 0.0);
        slices_.push_back(std::move(s));
        return slices_.size() - 1;
    }

    std::size_t size() const { return values_.size(); }
    std::size_t slice_count() const { return slices_.size(); }
    const Slice& slice(std::size_t i) const { return slices_.at(i); }
    const std::vector<Slice>& slices() const { return slices_; }

    std::size_t find(const std::string& name) const {
        for (std::size_t i = 0; i < slices_.size(); ++i) {
            if (slices_[i].name == name) return i;
        }
        throw std::out_of_range("ParamStore: no slice named '" + name + "'");
    }

    MatrixMap value(std::size_t i) {
        const auto& s = slices_.at(i);
        return MatrixMap(values_.data() + s.offset, Eigen::Index(s.rows), Eigen::Index(s.cols));
    }
    ConstMatrixMap value(std::size_t i) const {
        const auto& s = slices_.at(i);
        return ConstMatrixMap(values_.data() + s.offset, Eigen::Index(s.rows), Eigen::Index(s.cols));
    }
    MatrixMap grad(std::size_t i) {
        const auto& s = slices_.at(i);
        return MatrixMap(grads_.data() + s.offset, Eigen::Index(s.rows), Eigen::Index(s.cols));
    }
    ConstMatrixMap grad(std::size_t i) const {
        const auto& s = slices_.at(i);
        return ConstMatrixMap(grads_.data() + s.offset, Eigen::Index(s.rows), Eigen::Index(s.cols));
    }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& grads() { return grads_; }
    const std::vector<double>& grads() const { return grads_; }

    void zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

    /// Same slice names and shapes, in the same order.
    bool same_layout(const ParamStore& other) const {
        if (slices_.size() != other.slices_.size()) return false;
        for (std::size_t i = 0; i < slices_.size(); ++i) {
            const auto& a = slices_[i];
            const auto& b = other.slices_[i];
            if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
        }
        return true;
    }

private:
    std::vector<double> values_;
    std::vector<double> grads_;
    std::vector<Slice> slices_;
};

}  // namespace pearl
