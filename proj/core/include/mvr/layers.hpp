#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mvr/rng.hpp"
#include "mvr/tensor.hpp"

namespace mvr {

/// One named learnable tensor with its gradient accumulator.
template <typename S>
struct Param {
    std::string name;
    Tensor<S> value;
    Tensor<S> grad;

    void resize(const std::string& param_name, std::vector<int> shape) {
        name = param_name;
        value = Tensor<S>(shape);
        grad = Tensor<S>(std::move(shape));
    }
    int64_t numel() const { return value.numel(); }
};

template <typename S>
using ParamVisitor = std::function<void(Param<S>&)>;

template <typename S>
inline S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}
template <typename S>
inline S silu(S x) {
    return x * sigmoid(x);
}
template <typename S>
inline S silu_grad(S x) {
    const S s = sigmoid(x);
    return s * (S(1) + x * (S(1) - s));
}

/// Fills with Normal(0, std_dev) draws (consumes the stream elementwise).
template <typename S>
void fill_normal(Tensor<S>& t, Rng& rng, double std_dev);

/// Sinusoidal features of a discrete timestep: dim must be even; the first
/// half holds sin(k·f_i), the second cos(k·f_i), with f_i log-spaced from 1
/// down to 1/10000.
template <typename S>
Tensor<S> timestep_embedding(int k, int dim);

/// Per-view 2D convolution on [B, C, H, W] via im2col + GEMM.  Padding is
/// fixed at (k-1)/2, so stride 1 preserves H×W and stride 2 halves it
/// (rounding up).  backward() accumulates parameter gradients and returns
/// the input gradient; the input is cached, im2col is recomputed.
template <typename S>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(const std::string& name, int in_c, int out_c, int ksize, int stride = 1);

    Tensor<S> forward(const Tensor<S>& x);
    Tensor<S> backward(const Tensor<S>& dy);
    void visit(const ParamVisitor<S>& fn) {
        fn(w_);
        fn(b_);
    }

    Param<S>& weight() { return w_; }
    Param<S>& bias() { return b_; }
    int in_channels() const { return in_c_; }
    int out_channels() const { return out_c_; }
    int ksize() const { return k_; }

private:
    int in_c_ = 0, out_c_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
    Param<S> w_;  // [out_c, in_c, k, k]
    Param<S> b_;  // [out_c]
    Tensor<S> x_;
};

/// Cross-view 3D convolution: [N, C, H, W] is treated as one C-channel
/// volume over (view, h, w).  Kernel k×k×k, zero padding on all three axes,
/// stride 1; output shape equals input shape with out_c channels.
template <typename S>
class Conv3d {
public:
    Conv3d() = default;
    Conv3d(const std::string& name, int in_c, int out_c, int ksize);

    Tensor<S> forward(const Tensor<S>& x);
    Tensor<S> backward(const Tensor<S>& dy);
    void visit(const ParamVisitor<S>& fn) {
        fn(w_);
        fn(b_);
    }

    Param<S>& weight() { return w_; }
    Param<S>& bias() { return b_; }
    int ksize() const { return k_; }

private:
    int in_c_ = 0, out_c_ = 0, k_ = 0, pad_ = 0;
    Param<S> w_;  // [out_c, in_c, k, k, k] — (view, y, x) kernel order
    Param<S> b_;  // [out_c]
    Tensor<S> x_;
};

/// Group normalization over [B, C, H, W] with per-sample statistics.
template <typename S>
class GroupNorm {
public:
    GroupNorm() = default;
    GroupNorm(const std::string& name, int channels, int groups = 8);

    Tensor<S> forward(const Tensor<S>& x);
    Tensor<S> backward(const Tensor<S>& dy);
    void visit(const ParamVisitor<S>& fn) {
        fn(gamma_);
        fn(beta_);
    }

    Param<S>& gamma() { return gamma_; }
    Param<S>& beta() { return beta_; }

private:
    int channels_ = 0, groups_ = 0;
    Param<S> gamma_, beta_;
    Tensor<S> x_;
    Tensor<S> mean_, rstd_;  // [B, groups]
};

/// SiLU with cached input.
template <typename S>
class SiLU {
public:
    Tensor<S> forward(const Tensor<S>& x);
    Tensor<S> backward(const Tensor<S>& dy);

private:
    Tensor<S> x_;
};

/// Fully connected y = x·Wᵀ + b on [T, in] rows.
template <typename S>
class Linear {
public:
    Linear() = default;
    Linear(const std::string& name, int in_dim, int out_dim);

    Tensor<S> forward(const Tensor<S>& x);
    Tensor<S> backward(const Tensor<S>& dy);
    void visit(const ParamVisitor<S>& fn) {
        fn(w_);
        fn(b_);
    }

    Param<S>& weight() { return w_; }
    Param<S>& bias() { return b_; }

private:
    int in_dim_ = 0, out_dim_ = 0;
    Param<S> w_;  // [out, in]
    Param<S> b_;  // [out]
    Tensor<S> x_;
};

}  // namespace mvr
