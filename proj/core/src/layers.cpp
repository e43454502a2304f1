#include "mvr/layers.hpp"

#include "mvr/errors.hpp"

namespace mvr {

template <typename S>
void fill_normal(Tensor<S>& t, Rng& rng, double std_dev) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(rng.normal(0.0, std_dev));
}

template <typename S>
Tensor<S> timestep_embedding(int k, int dim) {
    if (dim < 2 || dim % 2 != 0)
        throw ContractError("timestep_embedding: dim must be even and >= 2");
    if (k < 0) throw ContractError("timestep_embedding: negative timestep");
    const int half = dim / 2;
    Tensor<S> e({dim});
    for (int i = 0; i < half; ++i) {
        const double f = std::exp(-std::log(10000.0) * i / half);
        e[i] = static_cast<S>(std::sin(k * f));
        e[half + i] = static_cast<S>(std::cos(k * f));
    }
    return e;
}

// ---- Conv2d -----------------------------------------------------------------

template <typename S>
Conv2d<S>::Conv2d(const std::string& name, int in_c, int out_c, int ksize, int stride)
    : in_c_(in_c), out_c_(out_c), k_(ksize), stride_(stride), pad_((ksize - 1) / 2) {
    if (in_c < 1 || out_c < 1 || ksize < 1 || ksize % 2 == 0 || stride < 1)
        throw ContractError("Conv2d " + name + ": bad geometry");
    w_.resize(name + ".weight", {out_c, in_c, ksize, ksize});
    b_.resize(name + ".bias", {out_c});
}

namespace {

// x [B, C, H, W] -> col [B*OH*OW, C*k*k] (zero padding).
template <typename S>
void im2col(const Tensor<S>& x, int ksize, int stride, int pad, int oh, int ow, Tensor<S>& col) {
    const int b_n = x.dim(0), c_n = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int patch = c_n * ksize * ksize;
    col.fill(S(0));
    for (int b = 0; b < b_n; ++b) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                S* row = col.data() + (static_cast<int64_t>(b) * oh * ow +
                                       static_cast<int64_t>(oy) * ow + ox) *
                                          patch;
                for (int c = 0; c < c_n; ++c) {
                    for (int ky = 0; ky < ksize; ++ky) {
                        const int sy = oy * stride + ky - pad;
                        if (sy < 0 || sy >= h) continue;
                        const S* src = &x.at(b, c, sy, 0);
                        S* dst = row + (c * ksize + ky) * ksize;
                        for (int kx = 0; kx < ksize; ++kx) {
                            const int sx = ox * stride + kx - pad;
                            if (sx >= 0 && sx < w) dst[kx] = src[sx];
                        }
                    }
                }
            }
        }
    }
}

// Transposed scatter-add of im2col: dcol [B*OH*OW, C*k*k] -> dx [B, C, H, W].
template <typename S>
void col2im(const Tensor<S>& dcol, int ksize, int stride, int pad, int oh, int ow, Tensor<S>& dx) {
    const int b_n = dx.dim(0), c_n = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
    const int patch = c_n * ksize * ksize;
    for (int b = 0; b < b_n; ++b) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const S* row = dcol.data() + (static_cast<int64_t>(b) * oh * ow +
                                              static_cast<int64_t>(oy) * ow + ox) *
                                                 patch;
                for (int c = 0; c < c_n; ++c) {
                    for (int ky = 0; ky < ksize; ++ky) {
                        const int sy = oy * stride + ky - pad;
                        if (sy < 0 || sy >= h) continue;
                        S* dst = &dx.at(b, c, sy, 0);
                        const S* src = row + (c * ksize + ky) * ksize;
                        for (int kx = 0; kx < ksize; ++kx) {
                            const int sx = ox * stride + kx - pad;
                            if (sx >= 0 && sx < w) dst[sx] += src[kx];
                        }
                    }
                }
            }
        }
    }
}

// [B, C, OH, OW] <-> [B*OH*OW, C] row copies.
template <typename S>
void rows_to_nchw(const Tensor<S>& rows, Tensor<S>& out) {
    const int b_n = out.dim(0), c_n = out.dim(1), oh = out.dim(2), ow = out.dim(3);
    for (int b = 0; b < b_n; ++b)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const S* src = &rows.at(static_cast<int>((static_cast<int64_t>(b) * oh + oy) * ow + ox), 0);
                for (int c = 0; c < c_n; ++c) out.at(b, c, oy, ox) = src[c];
            }
}

template <typename S>
void nchw_to_rows(const Tensor<S>& x, Tensor<S>& rows) {
    const int b_n = x.dim(0), c_n = x.dim(1), oh = x.dim(2), ow = x.dim(3);
    for (int b = 0; b < b_n; ++b)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                S* dst = &rows.at(static_cast<int>((static_cast<int64_t>(b) * oh + oy) * ow + ox), 0);
                for (int c = 0; c < c_n; ++c) dst[c] = x.at(b, c, oy, ox);
            }
}

}  // namespace

template <typename S>
Tensor<S> Conv2d<S>::forward(const Tensor<S>& x) {
    if (x.ndim() != 4 || x.dim(1) != in_c_)
        throw ContractError(w_.name + ": input shape " + shape_to_string(x.shape()));
    x_ = x;
    const int b_n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = (h + 2 * pad_ - k_) / stride_ + 1;
    const int ow = (w + 2 * pad_ - k_) / stride_ + 1;
    const int patch = in_c_ * k_ * k_;
    const int rows_n = b_n * oh * ow;

    Tensor<S> col({rows_n, patch});
    im2col(x, k_, stride_, pad_, oh, ow, col);

    Tensor<S> rows({rows_n, out_c_});
    matmul_nt(col.data(), w_.value.data(), rows.data(), rows_n, patch, out_c_);
    for (int r = 0; r < rows_n; ++r) {
        S* row = &rows.at(r, 0);
        for (int c = 0; c < out_c_; ++c) row[c] += b_.value[c];
    }

    Tensor<S> y({b_n, out_c_, oh, ow});
    rows_to_nchw(rows, y);
    return y;
}

template <typename S>
Tensor<S> Conv2d<S>::backward(const Tensor<S>& dy) {
    const int b_n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
    const int oh = dy.dim(2), ow = dy.dim(3);
    const int patch = in_c_ * k_ * k_;
    const int rows_n = b_n * oh * ow;

    Tensor<S> dy_rows({rows_n, out_c_});
    nchw_to_rows(dy, dy_rows);

    for (int r = 0; r < rows_n; ++r) {
        const S* row = &dy_rows.at(r, 0);
        for (int c = 0; c < out_c_; ++c) b_.grad[c] += row[c];
    }

    Tensor<S> col({rows_n, patch});
    im2col(x_, k_, stride_, pad_, oh, ow, col);
    matmul_tn(dy_rows.data(), col.data(), w_.grad.data(), out_c_, rows_n, patch, /*acc=*/true);

    Tensor<S> dcol({rows_n, patch});
    matmul_nn(dy_rows.data(), w_.value.data(), dcol.data(), rows_n, out_c_, patch);

    Tensor<S> dx({b_n, in_c_, h, w});
    col2im(dcol, k_, stride_, pad_, oh, ow, dx);
    return dx;
}

// ---- Conv3d -----------------------------------------------------------------

template <typename S>
Conv3d<S>::Conv3d(const std::string& name, int in_c, int out_c, int ksize)
    : in_c_(in_c), out_c_(out_c), k_(ksize), pad_((ksize - 1) / 2) {
    if (in_c < 1 || out_c < 1 || ksize < 1 || ksize % 2 == 0)
        throw ContractError("Conv3d " + name + ": bad geometry");
    w_.resize(name + ".weight", {out_c, in_c, ksize, ksize, ksize});
    b_.resize(name + ".bias", {out_c});
}

namespace {

// x [N, C, H, W] (N = volume depth) -> col [N*H*W, C*k^3], zero padded.
template <typename S>
void im2col3(const Tensor<S>& x, int ksize, int pad, Tensor<S>& col) {
    const int n = x.dim(0), c_n = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int patch = c_n * ksize * ksize * ksize;
    col.fill(S(0));
    for (int v = 0; v < n; ++v) {
        for (int oy = 0; oy < h; ++oy) {
            for (int ox = 0; ox < w; ++ox) {
                S* row = col.data() + (static_cast<int64_t>(v) * h * w +
                                       static_cast<int64_t>(oy) * w + ox) *
                                          patch;
                for (int c = 0; c < c_n; ++c) {
                    for (int kn = 0; kn < ksize; ++kn) {
                        const int sv = v + kn - pad;
                        if (sv < 0 || sv >= n) continue;
                        for (int ky = 0; ky < ksize; ++ky) {
                            const int sy = oy + ky - pad;
                            if (sy < 0 || sy >= h) continue;
                            const S* src = &x.at(sv, c, sy, 0);
                            S* dst = row + ((c * ksize + kn) * ksize + ky) * ksize;
                            for (int kx = 0; kx < ksize; ++kx) {
                                const int sx = ox + kx - pad;
                                if (sx >= 0 && sx < w) dst[kx] = src[sx];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename S>
void col2im3(const Tensor<S>& dcol, int ksize, int pad, Tensor<S>& dx) {
    const int n = dx.dim(0), c_n = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
    const int patch = c_n * ksize * ksize * ksize;
    for (int v = 0; v < n; ++v) {
        for (int oy = 0; oy < h; ++oy) {
            for (int ox = 0; ox < w; ++ox) {
                const S* row = dcol.data() + (static_cast<int64_t>(v) * h * w +
                                              static_cast<int64_t>(oy) * w + ox) *
                                                 patch;
                for (int c = 0; c < c_n; ++c) {
                    for (int kn = 0; kn < ksize; ++kn) {
                        const int sv = v + kn - pad;
                        if (sv < 0 || sv >= n) continue;
                        for (int ky = 0; ky < ksize; ++ky) {
                            const int sy = oy + ky - pad;
                            if (sy < 0 || sy >= h) continue;
                            S* dst = &dx.at(sv, c, sy, 0);
                            const S* src = row + ((c * ksize + kn) * ksize + ky) * ksize;
                            for (int kx = 0; kx < ksize; ++kx) {
                                const int sx = ox + kx - pad;
                                if (sx >= 0 && sx < w) dst[sx] += src[kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename S>
Tensor<S> Conv3d<S>::forward(const Tensor<S>& x) {
    if (x.ndim() != 4 || x.dim(1) != in_c_)
        throw ContractError(w_.name + ": input shape " + shape_to_string(x.shape()));
    x_ = x;
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int patch = in_c_ * k_ * k_ * k_;
    const int rows_n = n * h * w;

    Tensor<S> col({rows_n, patch});
    im2col3(x, k_, pad_, col);

    Tensor<S> rows({rows_n, out_c_});
    matmul_nt(col.data(), w_.value.data(), rows.data(), rows_n, patch, out_c_);
    for (int r = 0; r < rows_n; ++r) {
        S* row = &rows.at(r, 0);
        for (int c = 0; c < out_c_; ++c) row[c] += b_.value[c];
    }

    Tensor<S> y({n, out_c_, h, w});
    rows_to_nchw(rows, y);
    return y;
}

template <typename S>
Tensor<S> Conv3d<S>::backward(const Tensor<S>& dy) {
    const int n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
    const int patch = in_c_ * k_ * k_ * k_;
    const int rows_n = n * h * w;

    Tensor<S> dy_rows({rows_n, out_c_});
    nchw_to_rows(dy, dy_rows);

    for (int r = 0; r < rows_n; ++r) {
        const S* row = &dy_rows.at(r, 0);
        for (int c = 0; c < out_c_; ++c) b_.grad[c] += row[c];
    }

    Tensor<S> col({rows_n, patch});
    im2col3(x_, k_, pad_, col);
    matmul_tn(dy_rows.data(), col.data(), w_.grad.data(), out_c_, rows_n, patch, /*acc=*/true);

    Tensor<S> dcol({rows_n, patch});
    matmul_nn(dy_rows.data(), w_.value.data(), dcol.data(), rows_n, out_c_, patch);

    Tensor<S> dx({n, in_c_, h, w});
    col2im3(dcol, k_, pad_, dx);
    return dx;
}

// ---- GroupNorm ----------------------------------------------------------------

template <typename S>
GroupNorm<S>::GroupNorm(const std::string& name, int channels, int groups)
    : channels_(channels), groups_(groups) {
    if (channels < 1 || groups < 1 || channels % groups != 0)
        throw ContractError("GroupNorm " + name + ": channels must be divisible by groups");
    gamma_.resize(name + ".gamma", {channels});
    beta_.resize(name + ".beta", {channels});
    gamma_.value.fill(S(1));
}

template <typename S>
Tensor<S> GroupNorm<S>::forward(const Tensor<S>& x) {
    if (x.ndim() != 4 || x.dim(1) != channels_)
        throw ContractError(gamma_.name + ": input shape " + shape_to_string(x.shape()));
    x_ = x;
    const int b_n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int cg = channels_ / groups_;
    const int64_t group_elems = static_cast<int64_t>(cg) * h * w;
    constexpr double kEps = 1e-5;

    mean_ = Tensor<S>({b_n, groups_});
    rstd_ = Tensor<S>({b_n, groups_});
    Tensor<S> y(x.shape());
    for (int b = 0; b < b_n; ++b) {
        for (int g = 0; g < groups_; ++g) {
            double sum = 0, sq = 0;
            for (int c = g * cg; c < (g + 1) * cg; ++c)
                for (int yy = 0; yy < h; ++yy) {
                    const S* row = &x.at(b, c, yy, 0);
                    for (int xx = 0; xx < w; ++xx) {
                        sum += row[xx];
                        sq += static_cast<double>(row[xx]) * row[xx];
                    }
                }
            const double mu = sum / static_cast<double>(group_elems);
            const double var = sq / static_cast<double>(group_elems) - mu * mu;
            const double rstd = 1.0 / std::sqrt(var + kEps);
            mean_.at(b, g) = static_cast<S>(mu);
            rstd_.at(b, g) = static_cast<S>(rstd);
            for (int c = g * cg; c < (g + 1) * cg; ++c) {
                const S scale = static_cast<S>(rstd) * gamma_.value[c];
                const S shift = beta_.value[c];
                const S mu_s = static_cast<S>(mu);
                for (int yy = 0; yy < h; ++yy) {
                    const S* src = &x.at(b, c, yy, 0);
                    S* dst = &y.at(b, c, yy, 0);
                    for (int xx = 0; xx < w; ++xx) dst[xx] = (src[xx] - mu_s) * scale + shift;
                }
            }
        }
    }
    return y;
}

template <typename S>
Tensor<S> GroupNorm<S>::backward(const Tensor<S>& dy) {
    const int b_n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
    const int cg = channels_ / groups_;
    const int64_t m = static_cast<int64_t>(cg) * h * w;

    Tensor<S> dx(x_.shape());
    for (int b = 0; b < b_n; ++b) {
        for (int g = 0; g < groups_; ++g) {
            const S mu = mean_.at(b, g);
            const S r = rstd_.at(b, g);
            // Two reductions over the group: mean(dxhat) and mean(dxhat*xhat).
            double sum_dxh = 0, sum_dxh_xh = 0;
            for (int c = g * cg; c < (g + 1) * cg; ++c) {
                const S gam = gamma_.value[c];
                for (int yy = 0; yy < h; ++yy) {
                    const S* xrow = &x_.at(b, c, yy, 0);
                    const S* drow = &dy.at(b, c, yy, 0);
                    for (int xx = 0; xx < w; ++xx) {
                        const S xhat = (xrow[xx] - mu) * r;
                        const S dxh = drow[xx] * gam;
                        sum_dxh += dxh;
                        sum_dxh_xh += static_cast<double>(dxh) * xhat;
                        gamma_.grad[c] += drow[xx] * xhat;
                        beta_.grad[c] += drow[xx];
                    }
                }
            }
            const S mean_dxh = static_cast<S>(sum_dxh / static_cast<double>(m));
            const S mean_dxh_xh = static_cast<S>(sum_dxh_xh / static_cast<double>(m));
            for (int c = g * cg; c < (g + 1) * cg; ++c) {
                const S gam = gamma_.value[c];
                for (int yy = 0; yy < h; ++yy) {
                    const S* xrow = &x_.at(b, c, yy, 0);
                    const S* drow = &dy.at(b, c, yy, 0);
                    S* out = &dx.at(b, c, yy, 0);
                    for (int xx = 0; xx < w; ++xx) {
                        const S xhat = (xrow[xx] - mu) * r;
                        const S dxh = drow[xx] * gam;
                        out[xx] = r * (dxh - mean_dxh - xhat * mean_dxh_xh);
                    }
                }
            }
        }
    }
    return dx;
}

// ---- SiLU ---------------------------------------------------------------------

template <typename S>
Tensor<S> SiLU<S>::forward(const Tensor<S>& x) {
    x_ = x;
    Tensor<S> y(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) y[i] = silu(x[i]);
    return y;
}

template <typename S>
Tensor<S> SiLU<S>::backward(const Tensor<S>& dy) {
    Tensor<S> dx(x_.shape());
    for (int64_t i = 0; i < dx.numel(); ++i) dx[i] = dy[i] * silu_grad(x_[i]);
    return dx;
}

// ---- Linear -------------------------------------------------------------------

template <typename S>
Linear<S>::Linear(const std::string& name, int in_dim, int out_dim)
    : in_dim_(in_dim), out_dim_(out_dim) {
    if (in_dim < 1 || out_dim < 1) throw ContractError("Linear " + name + ": bad dims");
    w_.resize(name + ".weight", {out_dim, in_dim});
    b_.resize(name + ".bias", {out_dim});
}

template <typename S>
Tensor<S> Linear<S>::forward(const Tensor<S>& x) {
    if (x.ndim() != 2 || x.dim(1) != in_dim_)
        throw ContractError(w_.name + ": input shape " + shape_to_string(x.shape()));
    x_ = x;
    const int t = x.dim(0);
    Tensor<S> y({t, out_dim_});
    matmul_nt(x.data(), w_.value.data(), y.data(), t, in_dim_, out_dim_);
    for (int r = 0; r < t; ++r)
        for (int c = 0; c < out_dim_; ++c) y.at(r, c) += b_.value[c];
    return y;
}

template <typename S>
Tensor<S> Linear<S>::backward(const Tensor<S>& dy) {
    const int t = x_.dim(0);
    matmul_tn(dy.data(), x_.data(), w_.grad.data(), out_dim_, t, in_dim_, /*acc=*/true);
    for (int r = 0; r < t; ++r)
        for (int c = 0; c < out_dim_; ++c) b_.grad[c] += dy.at(r, c);
    Tensor<S> dx({t, in_dim_});
    matmul_nn(dy.data(), w_.value.data(), dx.data(), t, out_dim_, in_dim_);
    return dx;
}

// ---- explicit instantiations ---------------------------------------------------

template void fill_normal<float>(Tensor<float>&, Rng&, double);
template void fill_normal<double>(Tensor<double>&, Rng&, double);
template Tensor<float> timestep_embedding<float>(int, int);
template Tensor<double> timestep_embedding<double>(int, int);
template class Conv2d<float>;
template class Conv2d<double>;
template class Conv3d<float>;
template class Conv3d<double>;
template class GroupNorm<float>;
template class GroupNorm<double>;
template class SiLU<float>;
template class SiLU<double>;
template class Linear<float>;
template class Linear<double>;

}  // namespace mvr
