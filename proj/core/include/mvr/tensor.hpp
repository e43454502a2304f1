#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mvr/errors.hpp"

namespace mvr {

std::string shape_to_string(const std::vector<int>& shape);

/// Dense row-major n-d array of float or double.
///
/// Shapes follow the channels-first layout used throughout the model code:
/// view sets are [n_views, channels, h, w].  The class stays deliberately
/// small — indexing, fill, and raw data access — with linear algebra done
/// through the free matmul_* helpers below, and layer math written out
/// explicitly where it lives.
template <typename S>
class Tensor {
    static_assert(std::is_floating_point_v<S>);

public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        int64_t n = 1;
        for (int d : shape_) {
            if (d <= 0) throw ContractError("Tensor: non-positive dim in " + shape_to_string(shape_));
            n *= d;
        }
        data_.assign(static_cast<size_t>(n), S(0));
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, S value) {
        Tensor t(std::move(shape));
        t.fill(value);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }

    S& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const S& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    S& at(int a, int b) { return data_[static_cast<size_t>(a) * dim(1) + b]; }
    const S& at(int a, int b) const { return data_[static_cast<size_t>(a) * dim(1) + b]; }

    S& at(int a, int b, int c) {
        return data_[(static_cast<size_t>(a) * dim(1) + b) * dim(2) + c];
    }
    const S& at(int a, int b, int c) const {
        return data_[(static_cast<size_t>(a) * dim(1) + b) * dim(2) + c];
    }

    S& at(int a, int b, int c, int d) {
        return data_[((static_cast<size_t>(a) * dim(1) + b) * dim(2) + c) * static_cast<size_t>(dim(3)) + d];
    }
    const S& at(int a, int b, int c, int d) const {
        return data_[((static_cast<size_t>(a) * dim(1) + b) * dim(2) + c) * static_cast<size_t>(dim(3)) + d];
    }

    void fill(S v) { std::fill(data_.begin(), data_.end(), v); }

    /// Reinterprets the same data under a new shape (numel must match).
    void reshape(std::vector<int> shape) {
        int64_t n = 1;
        for (int d : shape) n *= d;
        if (n != numel())
            throw ContractError("Tensor::reshape: numel mismatch " + shape_to_string(shape_) +
                                " -> " + shape_to_string(shape));
        shape_ = std::move(shape);
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    /// Converts elementwise to another scalar type (used by the float/double
    /// gradient-check harness).
    template <typename T>
    Tensor<T> cast() const {
        Tensor<T> out(shape_);
        for (int64_t i = 0; i < numel(); ++i) out[i] = static_cast<T>(data_[static_cast<size_t>(i)]);
        return out;
    }

private:
    std::vector<int> shape_;
    std::vector<S> data_;
};

// ---- GEMM helpers ----------------------------------------------------------
//
// All operands are dense row-major.  The _tn/_nt suffix names which operand
// is transposed relative to its storage.  `acc` accumulates into C instead of
// overwriting it (used when summing weight gradients across views).

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<RowMat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const RowMat<S>>;

/// C[m,n] = A[m,k] · B[k,n]
template <typename S>
void matmul_nn(const S* a, const S* b, S* c, int m, int k, int n, bool acc = false) {
    ConstMatMap<S> ma(a, m, k), mb(b, k, n);
    MatMap<S> mc(c, m, n);
    if (acc)
        mc.noalias() += ma * mb;
    else
        mc.noalias() = ma * mb;
}

/// C[m,n] = A[k,m]ᵀ · B[k,n]
template <typename S>
void matmul_tn(const S* a, const S* b, S* c, int m, int k, int n, bool acc = false) {
    ConstMatMap<S> ma(a, k, m), mb(b, k, n);
    MatMap<S> mc(c, m, n);
    if (acc)
        mc.noalias() += ma.transpose() * mb;
    else
        mc.noalias() = ma.transpose() * mb;
}

/// C[m,n] = A[m,k] · B[n,k]ᵀ
template <typename S>
void matmul_nt(const S* a, const S* b, S* c, int m, int k, int n, bool acc = false) {
    ConstMatMap<S> ma(a, m, k), mb(b, n, k);
    MatMap<S> mc(c, m, n);
    if (acc)
        mc.noalias() += ma * mb.transpose();
    else
        mc.noalias() = ma * mb.transpose();
}

}  // namespace mvr
