#include "mvr/mv_unet.hpp"

#include <algorithm>
#include <cmath>

#include "mvr/errors.hpp"

namespace mvr {

// ---- config -------------------------------------------------------------------

std::vector<int> MVUNetConfig::widths() const {
    if (!level_widths.empty()) return level_widths;
    return {base_width, 2 * base_width, 4 * base_width};
}

bool MVUNetConfig::attends(int level) const {
    return std::find(attention_levels.begin(), attention_levels.end(), level) !=
           attention_levels.end();
}

void MVUNetConfig::validate() const {
    if (in_channels < 1 || cond_channels < 1)
        throw ContractError("MVUNetConfig: channel counts must be positive");
    const std::vector<int> w = widths();
    if (w.size() < 2) throw ContractError("MVUNetConfig: need at least 2 levels");
    for (int width : w) {
        if (width < 1) throw ContractError("MVUNetConfig: widths must be positive");
        if (width % norm_groups != 0)
            throw ContractError("MVUNetConfig: widths must be divisible by norm_groups");
    }
    const int levels = static_cast<int>(w.size());
    for (int l : attention_levels) {
        if (l == 0)
            throw ContractError(
                "MVUNetConfig: attention at level 0 (full resolution) is not allowed");
        if (l < 0 || l >= levels)
            throw ContractError("MVUNetConfig: attention level out of range");
        if (w[static_cast<size_t>(l)] % heads != 0)
            throw ContractError("MVUNetConfig: attended width not divisible by heads");
    }
    if (heads < 1) throw ContractError("MVUNetConfig: heads must be positive");
    if (w.back() % heads != 0)
        throw ContractError("MVUNetConfig: bottleneck width not divisible by heads");
    if (timestep_embed_dim < 2 || timestep_embed_dim % 2 != 0)
        throw ContractError("MVUNetConfig: timestep_embed_dim must be even and >= 2");
    if (norm_groups < 1) throw ContractError("MVUNetConfig: norm_groups must be positive");
    if (!std::isfinite(blend_alpha)) throw ContractError("MVUNetConfig: blend_alpha not finite");
}

// ---- shared tensor helpers ------------------------------------------------------

namespace {

template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
    const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    Tensor<S> out({n, ca + cb, h, w});
    for (int v = 0; v < n; ++v) {
        std::copy(&a.at(v, 0, 0, 0), &a.at(v, 0, 0, 0) + static_cast<int64_t>(ca) * h * w,
                  &out.at(v, 0, 0, 0));
        std::copy(&b.at(v, 0, 0, 0), &b.at(v, 0, 0, 0) + static_cast<int64_t>(cb) * h * w,
                  &out.at(v, ca, 0, 0));
    }
    return out;
}

template <typename S>
void split_channels(const Tensor<S>& joint, Tensor<S>& a, Tensor<S>& b) {
    const int n = joint.dim(0), ca = a.dim(1), cb = b.dim(1), h = joint.dim(2), w = joint.dim(3);
    for (int v = 0; v < n; ++v) {
        std::copy(&joint.at(v, 0, 0, 0), &joint.at(v, 0, 0, 0) + static_cast<int64_t>(ca) * h * w,
                  &a.at(v, 0, 0, 0));
        std::copy(&joint.at(v, ca, 0, 0), &joint.at(v, ca, 0, 0) + static_cast<int64_t>(cb) * h * w,
                  &b.at(v, 0, 0, 0));
    }
}

template <typename S>
void add_into(Tensor<S>& dst, const Tensor<S>& src) {
    for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

template <typename S>
Tensor<S> nearest_up2(const Tensor<S>& x) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<S> y({n, c, 2 * h, 2 * w});
    for (int v = 0; v < n; ++v)
        for (int ch = 0; ch < c; ++ch)
            for (int yy = 0; yy < h; ++yy) {
                const S* src = &x.at(v, ch, yy, 0);
                S* r0 = &y.at(v, ch, 2 * yy, 0);
                S* r1 = &y.at(v, ch, 2 * yy + 1, 0);
                for (int xx = 0; xx < w; ++xx) {
                    r0[2 * xx] = r0[2 * xx + 1] = src[xx];
                    r1[2 * xx] = r1[2 * xx + 1] = src[xx];
                }
            }
    return y;
}

template <typename S>
Tensor<S> nearest_up2_backward(const Tensor<S>& dy) {
    const int n = dy.dim(0), c = dy.dim(1), h = dy.dim(2) / 2, w = dy.dim(3) / 2;
    Tensor<S> dx({n, c, h, w});
    for (int v = 0; v < n; ++v)
        for (int ch = 0; ch < c; ++ch)
            for (int yy = 0; yy < h; ++yy) {
                const S* r0 = &dy.at(v, ch, 2 * yy, 0);
                const S* r1 = &dy.at(v, ch, 2 * yy + 1, 0);
                S* dst = &dx.at(v, ch, yy, 0);
                for (int xx = 0; xx < w; ++xx)
                    dst[xx] = r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1];
            }
    return dx;
}

// [N, C, H, W] <-> [N*H*W, C] token rows.
template <typename S>
Tensor<S> to_tokens(const Tensor<S>& x) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<S> t({n * h * w, c});
    for (int v = 0; v < n; ++v)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                S* row = &t.at((v * h + yy) * w + xx, 0);
                for (int ch = 0; ch < c; ++ch) row[ch] = x.at(v, ch, yy, xx);
            }
    return t;
}

template <typename S>
Tensor<S> from_tokens(const Tensor<S>& t, int n, int c, int h, int w) {
    Tensor<S> x({n, c, h, w});
    for (int v = 0; v < n; ++v)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                const S* row = &t.at((v * h + yy) * w + xx, 0);
                for (int ch = 0; ch < c; ++ch) x.at(v, ch, yy, xx) = row[ch];
            }
    return x;
}

template <typename S>
using StridedMap = Eigen::Map<RowMat<S>, 0, Eigen::OuterStride<>>;
template <typename S>
using ConstStridedMap = Eigen::Map<const RowMat<S>, 0, Eigen::OuterStride<>>;

}  // namespace

// ---- ResBlock -------------------------------------------------------------------

template <typename S>
ResBlock<S>::ResBlock(const std::string& name, int in_c, int out_c, int emb_dim, double alpha,
                      int groups)
    : in_c_(in_c),
      out_c_(out_c),
      blend2_(sigmoid(static_cast<S>(alpha))),
      blend3_(sigmoid(static_cast<S>(1.0 - alpha))),
      gn1_(name + ".gn1", in_c, groups),
      conv2a_(name + ".conv2a", in_c, out_c, 3),
      conv2b_(name + ".conv2b", out_c, out_c, 3),
      conv3a_(name + ".conv3a", in_c, out_c, 3),
      conv3b_(name + ".conv3b", out_c, out_c, 3),
      gn2d_(name + ".gn2d", out_c, groups),
      gn3d_(name + ".gn3d", out_c, groups),
      emb_(name + ".emb", emb_dim, 2 * out_c),
      has_skip_(in_c != out_c) {
    if (has_skip_) skip_ = Conv2d<S>(name + ".skip", in_c, out_c, 1);
}

template <typename S>
Tensor<S> ResBlock<S>::forward(const Tensor<S>& x, const Tensor<S>& emb_act) {
    const Tensor<S> h1 = act1_.forward(gn1_.forward(x));
    const Tensor<S> a2 = conv2a_.forward(h1);
    const Tensor<S> a3 = conv3a_.forward(h1);

    const Tensor<S> e = emb_.forward(emb_act);  // [1, 2*out_c]
    scale_ = Tensor<S>({out_c_});
    Tensor<S> shift({out_c_});
    for (int c = 0; c < out_c_; ++c) {
        scale_[c] = e.at(0, c);
        shift[c] = e.at(0, out_c_ + c);
    }

    n2_ = gn2d_.forward(a2);
    n3_ = gn3d_.forward(a3);
    const int n = x.dim(0), h = n2_.dim(2), w = n2_.dim(3);
    Tensor<S> f2(n2_.shape()), f3(n3_.shape());
    for (int v = 0; v < n; ++v)
        for (int c = 0; c < out_c_; ++c) {
            const S sc = S(1) + scale_[c], sh = shift[c];
            for (int yy = 0; yy < h; ++yy) {
                const S* s2 = &n2_.at(v, c, yy, 0);
                const S* s3 = &n3_.at(v, c, yy, 0);
                S* d2 = &f2.at(v, c, yy, 0);
                S* d3 = &f3.at(v, c, yy, 0);
                for (int xx = 0; xx < w; ++xx) {
                    d2[xx] = s2[xx] * sc + sh;
                    d3[xx] = s3[xx] * sc + sh;
                }
            }
        }

    const Tensor<S> o2 = conv2b_.forward(act2d_.forward(f2));
    const Tensor<S> o3 = conv3b_.forward(act3d_.forward(f3));

    Tensor<S> out = has_skip_ ? skip_.forward(x) : x;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += blend2_ * o2[i] + blend3_ * o3[i];
    return out;
}

template <typename S>
Tensor<S> ResBlock<S>::backward(const Tensor<S>& dy, Tensor<S>& d_emb_act) {
    Tensor<S> do2(dy.shape()), do3(dy.shape());
    for (int64_t i = 0; i < dy.numel(); ++i) {
        do2[i] = blend2_ * dy[i];
        do3[i] = blend3_ * dy[i];
    }
    const Tensor<S> df2 = act2d_.backward(conv2b_.backward(do2));
    const Tensor<S> df3 = act3d_.backward(conv3b_.backward(do3));

    // FiLM backward: f = n*(1+scale) + shift with per-channel scale/shift.
    const int n = df2.dim(0), h = df2.dim(2), w = df2.dim(3);
    Tensor<S> de({1, 2 * out_c_});
    Tensor<S> dn2(df2.shape()), dn3(df3.shape());
    for (int c = 0; c < out_c_; ++c) {
        const S sc = S(1) + scale_[c];
        double dscale = 0, dshift = 0;
        for (int v = 0; v < n; ++v)
            for (int yy = 0; yy < h; ++yy) {
                const S* g2 = &df2.at(v, c, yy, 0);
                const S* g3 = &df3.at(v, c, yy, 0);
                const S* s2 = &n2_.at(v, c, yy, 0);
                const S* s3 = &n3_.at(v, c, yy, 0);
                S* o2 = &dn2.at(v, c, yy, 0);
                S* o3 = &dn3.at(v, c, yy, 0);
                for (int xx = 0; xx < w; ++xx) {
                    dscale += static_cast<double>(g2[xx]) * s2[xx] +
                              static_cast<double>(g3[xx]) * s3[xx];
                    dshift += static_cast<double>(g2[xx]) + g3[xx];
                    o2[xx] = g2[xx] * sc;
                    o3[xx] = g3[xx] * sc;
                }
            }
        de.at(0, c) = static_cast<S>(dscale);
        de.at(0, out_c_ + c) = static_cast<S>(dshift);
    }
    add_into(d_emb_act, emb_.backward(de));

    Tensor<S> dh1 = conv2a_.backward(gn2d_.backward(dn2));
    add_into(dh1, conv3a_.backward(gn3d_.backward(dn3)));
    Tensor<S> dx = gn1_.backward(act1_.backward(dh1));
    if (has_skip_)
        add_into(dx, skip_.backward(dy));
    else
        add_into(dx, dy);
    return dx;
}

template <typename S>
void ResBlock<S>::visit(const ParamVisitor<S>& fn) {
    gn1_.visit(fn);
    conv2a_.visit(fn);
    conv2b_.visit(fn);
    conv3a_.visit(fn);
    conv3b_.visit(fn);
    gn2d_.visit(fn);
    gn3d_.visit(fn);
    emb_.visit(fn);
    if (has_skip_) skip_.visit(fn);
}

// ---- Attention3D ------------------------------------------------------------------

template <typename S>
Attention3D<S>::Attention3D(const std::string& name, int channels, int heads, int groups)
    : channels_(channels),
      heads_(heads),
      norm_(name + ".norm", channels, groups),
      q_(name + ".q", channels, channels),
      k_(name + ".k", channels, channels),
      v_(name + ".v", channels, channels),
      out_(name + ".out", channels, channels) {
    if (channels % heads != 0)
        throw ContractError("Attention3D " + name + ": channels not divisible by heads");
}

template <typename S>
Tensor<S> Attention3D<S>::forward(const Tensor<S>& x) {
    x_shape_ = x.shape();
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int t = n * h * w;
    const int d = c / heads_;
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(d)));

    const Tensor<S> tokens = to_tokens(norm_.forward(x));
    qv_ = q_.forward(tokens);
    kv_ = k_.forward(tokens);
    vv_ = v_.forward(tokens);

    Tensor<S> attended({t, c});
    Tensor<S> scores({t, t});
    for (int head = 0; head < heads_; ++head) {
        ConstStridedMap<S> mq(qv_.data() + head * d, t, d, Eigen::OuterStride<>(c));
        ConstStridedMap<S> mk(kv_.data() + head * d, t, d, Eigen::OuterStride<>(c));
        ConstStridedMap<S> mv(vv_.data() + head * d, t, d, Eigen::OuterStride<>(c));
        MatMap<S> ms(scores.data(), t, t);
        ms.noalias() = mq * mk.transpose() * scale;
        for (int i = 0; i < t; ++i) {
            S* row = &scores.at(i, 0);
            const S mx = *std::max_element(row, row + t);
            double sum = 0;
            for (int j = 0; j < t; ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            const S inv = static_cast<S>(1.0 / sum);
            for (int j = 0; j < t; ++j) row[j] *= inv;
        }
        StridedMap<S> mo(attended.data() + head * d, t, d, Eigen::OuterStride<>(c));
        mo.noalias() = ConstMatMap<S>(scores.data(), t, t) * mv;
    }

    const Tensor<S> projected = out_.forward(attended);
    Tensor<S> y = x;
    add_into(y, from_tokens(projected, n, c, h, w));
    return y;
}

template <typename S>
Tensor<S> Attention3D<S>::backward(const Tensor<S>& dy) {
    const int n = x_shape_[0], c = x_shape_[1], h = x_shape_[2], w = x_shape_[3];
    const int t = n * h * w;
    const int d = c / heads_;
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(d)));

    const Tensor<S> d_proj = to_tokens(dy);
    const Tensor<S> d_attended = out_.backward(d_proj);

    Tensor<S> dq({t, c}), dk({t, c}), dv({t, c});
    Tensor<S> probs({t, t}), dp({t, t});
    for (int head = 0; head < heads_; ++head) {
        ConstStridedMap<S> mq(qv_.data() + head * d, t, d, Eigen::OuterStride<>(c));
        ConstStridedMap<S> mk(kv_.data() + head * d, t, d, Eigen::OuterStride<>(c));
        ConstStridedMap<S> mv(vv_.data() + head * d, t, d, Eigen::OuterStride<>(c));
        ConstStridedMap<S> mdo(d_attended.data() + head * d, t, d, Eigen::OuterStride<>(c));

        // Recompute the softmax (cheaper than caching T×T per head).
        MatMap<S> mp(probs.data(), t, t);
        mp.noalias() = mq * mk.transpose() * scale;
        for (int i = 0; i < t; ++i) {
            S* row = &probs.at(i, 0);
            const S mx = *std::max_element(row, row + t);
            double sum = 0;
            for (int j = 0; j < t; ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            const S inv = static_cast<S>(1.0 / sum);
            for (int j = 0; j < t; ++j) row[j] *= inv;
        }

        StridedMap<S> mdv(dv.data() + head * d, t, d, Eigen::OuterStride<>(c));
        mdv.noalias() = ConstMatMap<S>(probs.data(), t, t).transpose() * mdo;

        MatMap<S> mdp(dp.data(), t, t);
        mdp.noalias() = mdo * mv.transpose();

        // softmax backward row by row: dz = p ⊙ (dp − Σ_j p_j dp_j).
        for (int i = 0; i < t; ++i) {
            const S* prow = &probs.at(i, 0);
            S* drow = &dp.at(i, 0);
            double dot = 0;
            for (int j = 0; j < t; ++j) dot += static_cast<double>(prow[j]) * drow[j];
            const S dots = static_cast<S>(dot);
            for (int j = 0; j < t; ++j) drow[j] = prow[j] * (drow[j] - dots);
        }

        StridedMap<S> mdq(dq.data() + head * d, t, d, Eigen::OuterStride<>(c));
        StridedMap<S> mdk(dk.data() + head * d, t, d, Eigen::OuterStride<>(c));
        mdq.noalias() = ConstMatMap<S>(dp.data(), t, t) * mk * scale;
        mdk.noalias() = ConstMatMap<S>(dp.data(), t, t).transpose() * mq * scale;
    }

    Tensor<S> d_tokens = q_.backward(dq);
    add_into(d_tokens, k_.backward(dk));
    add_into(d_tokens, v_.backward(dv));

    Tensor<S> dx = norm_.backward(from_tokens(d_tokens, n, c, h, w));
    add_into(dx, dy);  // residual
    return dx;
}

template <typename S>
void Attention3D<S>::visit(const ParamVisitor<S>& fn) {
    norm_.visit(fn);
    q_.visit(fn);
    k_.visit(fn);
    v_.visit(fn);
    out_.visit(fn);
}

// ---- MVUNet ------------------------------------------------------------------------

namespace {

template <typename S>
void init_conv2(Conv2d<S>& conv, Rng& rng) {
    const auto& shape = conv.weight().value.shape();
    const double fan_in = static_cast<double>(shape[1]) * shape[2] * shape[3];
    fill_normal(conv.weight().value, rng, 1.0 / std::sqrt(fan_in));
}

template <typename S>
void init_linear(Linear<S>& lin, Rng& rng) {
    const double fan_in = lin.weight().value.dim(1);
    fill_normal(lin.weight().value, rng, 1.0 / std::sqrt(fan_in));
}

// 3D kernel = matching 2D kernel in the central view slice, small noise on
// the off-center slices (a near-2D starting point for the cross-view path).
template <typename S>
void init_conv3_centered(Conv3d<S>& c3, Conv2d<S>& c2, Rng& rng) {
    Tensor<S>& w3 = c3.weight().value;
    const Tensor<S>& w2 = c2.weight().value;
    const int out_c = w3.dim(0), in_c = w3.dim(1), k = w3.dim(2);
    const int center = (k - 1) / 2;
    for (int oc = 0; oc < out_c; ++oc)
        for (int ic = 0; ic < in_c; ++ic)
            for (int kn = 0; kn < k; ++kn)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        S& tap = w3[(((static_cast<int64_t>(oc) * in_c + ic) * k + kn) * k + ky) *
                                        k +
                                    kx];
                        tap = (kn == center) ? w2.at(oc, ic, ky, kx)
                                             : static_cast<S>(rng.normal(0.0, 1e-3));
                    }
}

template <typename S>
void init_resblock(ResBlock<S>& block, Rng& rng) {
    init_conv2(block.conv2a(), rng);
    // conv2b stays zero so each block starts as (near) identity; the 3D
    // counterparts copy their 2D central slice and add off-center noise.
    init_conv3_centered(block.conv3a(), block.conv2a(), rng);
    init_conv3_centered(block.conv3b(), block.conv2b(), rng);
    if (block.has_skip()) init_conv2(block.skip_conv(), rng);
}

template <typename S>
void init_attention(Attention3D<S>& attn, Rng& rng) {
    init_linear(attn.proj_q(), rng);
    init_linear(attn.proj_k(), rng);
    init_linear(attn.proj_v(), rng);
    // Output projection starts at zero: the block begins as the identity.
}

}  // namespace

template <typename S>
MVUNet<S>::MVUNet(const MVUNetConfig& config, uint64_t seed) : config_(config) {
    config_.validate();
    widths_ = config_.widths();
    const int levels = static_cast<int>(widths_.size());
    const int ted = config_.timestep_embed_dim;
    const int groups = config_.norm_groups;
    const double alpha = config_.blend_alpha;

    stem_ = Conv2d<S>("stem", config_.in_channels + config_.cond_channels, widths_[0], 3);
    time1_ = Linear<S>("time.fc1", ted, ted);
    time2_ = Linear<S>("time.fc2", ted, ted);

    enc_.reserve(static_cast<size_t>(levels));
    enc_attn_.resize(static_cast<size_t>(levels));
    dec_.reserve(static_cast<size_t>(levels));
    dec_attn_.resize(static_cast<size_t>(levels));

    for (int l = 0; l < levels; ++l) {
        const int in_c = widths_[static_cast<size_t>(std::max(0, l - 1))];
        const int out_c = widths_[static_cast<size_t>(l)];
        enc_.emplace_back("enc" + std::to_string(l), in_c, out_c, ted, alpha, groups);
        if (config_.attends(l))
            enc_attn_[static_cast<size_t>(l)].emplace("enc" + std::to_string(l) + ".attn", out_c,
                                                      config_.heads, groups);
        if (l > 0)
            downs_.emplace_back("down" + std::to_string(l - 1), in_c, in_c, 3, /*stride=*/2);
    }

    const int bottom = widths_.back();
    mid1_.emplace("mid.block1", bottom, bottom, ted, alpha, groups);
    mid_attn_.emplace("mid.attn", bottom, config_.heads, groups);
    mid2_.emplace("mid.block2", bottom, bottom, ted, alpha, groups);

    for (int l = 0; l < levels; ++l) {
        const int width = widths_[static_cast<size_t>(l)];
        dec_.emplace_back("dec" + std::to_string(l), 2 * width, width, ted, alpha, groups);
        if (config_.attends(l))
            dec_attn_[static_cast<size_t>(l)].emplace("dec" + std::to_string(l) + ".attn", width,
                                                      config_.heads, groups);
        if (l > 0)
            up_convs_.emplace_back("up" + std::to_string(l), width,
                                   widths_[static_cast<size_t>(l - 1)], 3);
    }

    head_norm_ = GroupNorm<S>("head.norm", widths_[0], groups);
    head_conv_ = Conv2d<S>("head.conv", widths_[0], config_.in_channels, 3);

    // ---- weight initialization (single stream, fixed traversal order) ----
    Rng rng(hash_combine(seed, 0x6d76756e6574ull));  // model init stream

    init_conv2(stem_, rng);
    // Condition-channel stem columns are exactly zero: before training the
    // network output is bit-identical for any condition input.
    {
        Tensor<S>& w = stem_.weight().value;
        for (int oc = 0; oc < w.dim(0); ++oc)
            for (int ic = config_.in_channels; ic < w.dim(1); ++ic)
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) w.at(oc, ic, ky, kx) = S(0);
    }
    init_linear(time1_, rng);
    init_linear(time2_, rng);

    for (int l = 0; l < levels; ++l) {
        init_resblock(enc_[static_cast<size_t>(l)], rng);
        if (enc_attn_[static_cast<size_t>(l)]) init_attention(*enc_attn_[static_cast<size_t>(l)], rng);
        if (l > 0) init_conv2(downs_[static_cast<size_t>(l - 1)], rng);
    }
    init_resblock(*mid1_, rng);
    init_attention(*mid_attn_, rng);
    init_resblock(*mid2_, rng);
    for (int l = 0; l < levels; ++l) {
        init_resblock(dec_[static_cast<size_t>(l)], rng);
        if (dec_attn_[static_cast<size_t>(l)]) init_attention(*dec_attn_[static_cast<size_t>(l)], rng);
        if (l > 0) init_conv2(up_convs_[static_cast<size_t>(l - 1)], rng);
    }
    init_conv2(head_conv_, rng);
}

template <typename S>
Tensor<S> MVUNet<S>::forward(const Tensor<S>& noisy, const Tensor<S>& cond, int k) {
    if (noisy.ndim() != 4 || cond.ndim() != 4)
        throw ContractError("MVUNet::forward: latent sets must be rank-4 [N, C, H, W]");
    if (noisy.dim(1) != config_.in_channels || cond.dim(1) != config_.cond_channels)
        throw ContractError("MVUNet::forward: channel mismatch with config");
    if (noisy.dim(0) != cond.dim(0) || noisy.dim(2) != cond.dim(2) ||
        noisy.dim(3) != cond.dim(3))
        throw ContractError("MVUNet::forward: noisy/cond shape mismatch");
    if (k < 0) throw ContractError("MVUNet::forward: negative timestep");
    const int down = config_.total_downscale();
    if (noisy.dim(2) % down != 0 || noisy.dim(3) % down != 0)
        throw ContractError("MVUNet::forward: H and W must be divisible by " +
                            std::to_string(down));

    fwd_n_ = noisy.dim(0);
    fwd_h_ = noisy.dim(2);
    fwd_w_ = noisy.dim(3);
    const int levels = static_cast<int>(widths_.size());

    // Timestep pipeline, shared by every block this forward.
    Tensor<S> sin_emb = timestep_embedding<S>(k, config_.timestep_embed_dim);
    sin_emb.reshape({1, config_.timestep_embed_dim});
    const Tensor<S> temb = time2_.forward(time_mid_.forward(time1_.forward(sin_emb)));
    emb_act_ = time_out_.forward(temb);
    d_emb_act_ = Tensor<S>(emb_act_.shape());

    Tensor<S> h = stem_.forward(concat_channels(noisy, cond));

    std::vector<Tensor<S>> skips(static_cast<size_t>(levels));
    for (int l = 0; l < levels; ++l) {
        if (l > 0) h = downs_[static_cast<size_t>(l - 1)].forward(h);
        h = enc_[static_cast<size_t>(l)].forward(h, emb_act_);
        if (enc_attn_[static_cast<size_t>(l)]) h = enc_attn_[static_cast<size_t>(l)]->forward(h);
        skips[static_cast<size_t>(l)] = h;
    }

    h = mid1_->forward(h, emb_act_);
    h = mid_attn_->forward(h);
    h = mid2_->forward(h, emb_act_);

    for (int l = levels - 1; l >= 0; --l) {
        h = concat_channels(h, skips[static_cast<size_t>(l)]);
        h = dec_[static_cast<size_t>(l)].forward(h, emb_act_);
        if (dec_attn_[static_cast<size_t>(l)]) h = dec_attn_[static_cast<size_t>(l)]->forward(h);
        if (l > 0) h = up_convs_[static_cast<size_t>(l - 1)].forward(nearest_up2(h));
    }

    return head_conv_.forward(head_act_.forward(head_norm_.forward(h)));
}

template <typename S>
Tensor<S> MVUNet<S>::backward(const Tensor<S>& d_out) {
    const int levels = static_cast<int>(widths_.size());
    Tensor<S> dh = head_norm_.backward(head_act_.backward(head_conv_.backward(d_out)));

    std::vector<Tensor<S>> dskips(static_cast<size_t>(levels));
    for (int l = 0; l <= levels - 1; ++l) {
        if (l > 0) {
            dh = nearest_up2_backward(up_convs_[static_cast<size_t>(l - 1)].backward(dh));
        }
        if (dec_attn_[static_cast<size_t>(l)]) dh = dec_attn_[static_cast<size_t>(l)]->backward(dh);
        const Tensor<S> dcat = dec_[static_cast<size_t>(l)].backward(dh, d_emb_act_);
        const int width = widths_[static_cast<size_t>(l)];
        const int n = dcat.dim(0), sh = dcat.dim(2), sw = dcat.dim(3);
        Tensor<S> dcur({n, width, sh, sw});
        dskips[static_cast<size_t>(l)] = Tensor<S>({n, width, sh, sw});
        split_channels(dcat, dcur, dskips[static_cast<size_t>(l)]);
        dh = std::move(dcur);
    }

    dh = mid2_->backward(dh, d_emb_act_);
    dh = mid_attn_->backward(dh);
    dh = mid1_->backward(dh, d_emb_act_);

    for (int l = levels - 1; l >= 0; --l) {
        add_into(dh, dskips[static_cast<size_t>(l)]);
        if (enc_attn_[static_cast<size_t>(l)]) dh = enc_attn_[static_cast<size_t>(l)]->backward(dh);
        dh = enc_[static_cast<size_t>(l)].backward(dh, d_emb_act_);
        if (l > 0) dh = downs_[static_cast<size_t>(l - 1)].backward(dh);
    }

    const Tensor<S> d_joint = stem_.backward(dh);

    // Close the timestep pipeline now that every block contributed.
    time1_.backward(time_mid_.backward(time2_.backward(time_out_.backward(d_emb_act_))));

    Tensor<S> d_noisy({fwd_n_, config_.in_channels, fwd_h_, fwd_w_});
    Tensor<S> d_cond({fwd_n_, config_.cond_channels, fwd_h_, fwd_w_});
    split_channels(d_joint, d_noisy, d_cond);
    return d_noisy;
}

template <typename S>
void MVUNet<S>::visit_params(const ParamVisitor<S>& fn) {
    const int levels = static_cast<int>(widths_.size());
    stem_.visit(fn);
    time1_.visit(fn);
    time2_.visit(fn);
    for (int l = 0; l < levels; ++l) {
        enc_[static_cast<size_t>(l)].visit(fn);
        if (enc_attn_[static_cast<size_t>(l)]) enc_attn_[static_cast<size_t>(l)]->visit(fn);
        if (l > 0) downs_[static_cast<size_t>(l - 1)].visit(fn);
    }
    mid1_->visit(fn);
    mid_attn_->visit(fn);
    mid2_->visit(fn);
    for (int l = 0; l < levels; ++l) {
        dec_[static_cast<size_t>(l)].visit(fn);
        if (dec_attn_[static_cast<size_t>(l)]) dec_attn_[static_cast<size_t>(l)]->visit(fn);
        if (l > 0) up_convs_[static_cast<size_t>(l - 1)].visit(fn);
    }
    head_norm_.visit(fn);
    head_conv_.visit(fn);
}

template <typename S>
void MVUNet<S>::zero_grad() {
    visit_params([](Param<S>& p) { p.grad.fill(S(0)); });
}

template <typename S>
int64_t MVUNet<S>::count_parameters() {
    int64_t n = 0;
    visit_params([&n](Param<S>& p) { n += p.numel(); });
    return n;
}

template class ResBlock<float>;
template class ResBlock<double>;
template class Attention3D<float>;
template class Attention3D<double>;
template class MVUNet<float>;
template class MVUNet<double>;

}  // namespace mvr
