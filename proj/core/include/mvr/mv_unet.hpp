#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mvr/layers.hpp"

namespace mvr {

/// Architecture of the multi-view denoiser.  Latent sets are rank-4 tensors
/// [n_views, channels, height, width] throughout.
struct MVUNetConfig {
    int in_channels = 3;    // noisy latent channels
    int cond_channels = 3;  // condition latent channels
    int base_width = 16;
    /// Per-level channel widths; empty derives {base, 2·base, 4·base}.
    std::vector<int> level_widths;
    /// Levels with joint cross-view attention.  Level 0 (full resolution)
    /// is not allowed; the bottleneck always attends regardless.
    std::vector<int> attention_levels = {1, 2};
    double blend_alpha = 0.5;  // 2D/3D blend: sigmoid(a)·O2D + sigmoid(1-a)·O3D
    int heads = 4;
    int timestep_embed_dim = 64;
    int norm_groups = 8;

    std::vector<int> widths() const;
    int n_levels() const { return static_cast<int>(widths().size()); }
    bool attends(int level) const;
    /// Spatial downscale between level 0 and the bottleneck.
    int total_downscale() const { return 1 << (n_levels() - 1); }

    void validate() const;
};

/// ResNet block blending a per-view 2D conv path with a cross-view 3D conv
/// path: out = sigmoid(α)·O_2D + sigmoid(1−α)·O_3D + skip(x).  Both paths
/// share the input trunk (GN→SiLU) and the timestep FiLM (scale/shift on
/// their normalized mid features); each has its own conv pair and mid norm.
template <typename S>
class ResBlock {
public:
    ResBlock() = default;
    ResBlock(const std::string& name, int in_c, int out_c, int emb_dim, double alpha, int groups);

    /// x: [N, in_c, H, W]; emb_act: [1, emb_dim] (activated model embedding).
    Tensor<S> forward(const Tensor<S>& x, const Tensor<S>& emb_act);
    /// Returns dx; accumulates parameter grads and adds this block's
    /// embedding gradient into d_emb_act.
    Tensor<S> backward(const Tensor<S>& dy, Tensor<S>& d_emb_act);
    void visit(const ParamVisitor<S>& fn);

    S blend_2d() const { return blend2_; }
    S blend_3d() const { return blend3_; }
    Conv2d<S>& conv2a() { return conv2a_; }
    Conv2d<S>& conv2b() { return conv2b_; }
    Conv3d<S>& conv3a() { return conv3a_; }
    Conv3d<S>& conv3b() { return conv3b_; }
    bool has_skip() const { return has_skip_; }
    Conv2d<S>& skip_conv() { return skip_; }

private:
    int in_c_ = 0, out_c_ = 0;
    S blend2_ = 0, blend3_ = 0;
    GroupNorm<S> gn1_;
    SiLU<S> act1_;
    Conv2d<S> conv2a_, conv2b_;
    Conv3d<S> conv3a_, conv3b_;
    GroupNorm<S> gn2d_, gn3d_;
    SiLU<S> act2d_, act3d_;
    Linear<S> emb_;  // emb_dim -> 2*out_c (scale, shift)
    bool has_skip_ = false;
    Conv2d<S> skip_;
    Tensor<S> n2_, n3_;          // normalized mid features (pre-FiLM)
    Tensor<S> scale_;            // [out_c], from the timestep embedding
};

/// Joint self-attention over all views' spatial tokens: [N, C, H, W] is
/// flattened to N·H·W tokens of C channels; multi-head scaled dot-product
/// attention runs over the full token set (views attend to each other);
/// the projected result is added back residually.
template <typename S>
class Attention3D {
public:
    Attention3D() = default;
    Attention3D(const std::string& name, int channels, int heads, int groups);

    Tensor<S> forward(const Tensor<S>& x);
    Tensor<S> backward(const Tensor<S>& dy);
    void visit(const ParamVisitor<S>& fn);

    Linear<S>& proj_q() { return q_; }
    Linear<S>& proj_k() { return k_; }
    Linear<S>& proj_v() { return v_; }
    Linear<S>& proj_out() { return out_; }
    GroupNorm<S>& norm() { return norm_; }

private:
    int channels_ = 0, heads_ = 0;
    GroupNorm<S> norm_;
    Linear<S> q_, k_, v_, out_;
    Tensor<S> qv_, kv_, vv_;  // projected tokens [T, C]
    std::vector<int> x_shape_;
};

/// The multi-view denoising UNet: channel-concatenated (noisy, condition)
/// stem with the condition columns zero-initialized, per-level ResNet
/// blend blocks, joint attention at the configured low-resolution levels
/// and the bottleneck, timestep FiLM conditioning, and a GN+SiLU+conv head
/// predicting noise with the same shape as the noisy input.
template <typename S>
class MVUNet {
public:
    explicit MVUNet(const MVUNetConfig& config, uint64_t seed);

    /// noisy: [N, in_channels, H, W]; cond: [N, cond_channels, H, W];
    /// k: diffusion timestep (>= 0).  H and W must be divisible by
    /// total_downscale().  Returns the noise estimate, same shape as noisy.
    Tensor<S> forward(const Tensor<S>& noisy, const Tensor<S>& cond, int k);

    /// Backpropagates d_out (same shape as the output), accumulating all
    /// parameter gradients; returns the gradient w.r.t. the noisy input.
    Tensor<S> backward(const Tensor<S>& d_out);

    void zero_grad();
    void visit_params(const ParamVisitor<S>& fn);
    int64_t count_parameters();
    const MVUNetConfig& config() const { return config_; }

    Conv2d<S>& stem() { return stem_; }
    ResBlock<S>& encoder_block(int level) { return enc_[static_cast<size_t>(level)]; }
    Attention3D<S>& bottleneck_attention() { return *mid_attn_; }

private:
    MVUNetConfig config_;
    std::vector<int> widths_;

    Conv2d<S> stem_;
    Linear<S> time1_, time2_;
    SiLU<S> time_mid_, time_out_;

    std::vector<ResBlock<S>> enc_;
    std::vector<std::optional<Attention3D<S>>> enc_attn_;
    std::vector<Conv2d<S>> downs_;

    std::optional<ResBlock<S>> mid1_, mid2_;
    std::optional<Attention3D<S>> mid_attn_;

    std::vector<ResBlock<S>> dec_;  // dec_[l] consumes concat(current, skip_l)
    std::vector<std::optional<Attention3D<S>>> dec_attn_;
    std::vector<Conv2d<S>> up_convs_;  // leaving level l: widths[l] -> widths[l-1]

    GroupNorm<S> head_norm_;
    SiLU<S> head_act_;
    Conv2d<S> head_conv_;

    Tensor<S> emb_act_;    // [1, D] cached per forward
    Tensor<S> d_emb_act_;  // accumulated by block backwards
    int fwd_n_ = 0, fwd_h_ = 0, fwd_w_ = 0;
};

/// Total number of learnable scalars.
template <typename S>
int64_t count_parameters(MVUNet<S>& model) {
    return model.count_parameters();
}

}  // namespace mvr
