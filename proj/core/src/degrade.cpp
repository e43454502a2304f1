#include "mvr/degrade.hpp"

#include <cmath>

#include "mvr/errors.hpp"

namespace mvr {

double BlurKernel::sum() const {
    double s = 0;
    for (double w : weights) s += w;
    return s;
}

void BlurKernel::validate() const {
    if (size < 3 || size % 2 == 0) throw ContractError("BlurKernel: size must be odd and >= 3");
    if (weights.size() != static_cast<size_t>(size) * size)
        throw ContractError("BlurKernel: weight count mismatch");
    for (double w : weights)
        if (!(w >= 0.0)) throw ContractError("BlurKernel: negative weight");
    if (std::abs(sum() - 1.0) > 1e-6) throw ContractError("BlurKernel: weights do not sum to 1");
}

int sample_kernel_size(const BlurParams& params, Rng& rng) {
    if (!(params.size_mean > 0)) throw ContractError("sample_kernel_size: size_mean must be > 0");
    const double draw = rng.normal(params.size_mean, params.size_std);
    // Nearest odd integer: odd values sit at 2m+1.
    int odd = 2 * static_cast<int>(std::llround((draw - 1.0) / 2.0)) + 1;
    const int hi = 2 * static_cast<int>(std::floor(params.size_mean - 1.0)) + 1;
    if (odd < 3) odd = 3;
    if (odd > hi) odd = hi;
    if (odd < 3) odd = 3;  // degenerate size_mean < 2 still yields a legal kernel
    return odd;
}

BlurKernel rasterize_trajectory(const std::vector<Eigen::Vector2d>& points, int size) {
    if (size < 3 || size % 2 == 0)
        throw ContractError("rasterize_trajectory: size must be odd and >= 3");
    if (points.empty()) throw ContractError("rasterize_trajectory: empty trajectory");

    BlurKernel kernel;
    kernel.size = size;
    kernel.weights.assign(static_cast<size_t>(size) * size, 0.0);

    const double center = (size - 1) / 2.0;
    for (const auto& p : points) {
        const double px = center + p.x();
        const double py = center + p.y();
        const int x0 = static_cast<int>(std::floor(px));
        const int y0 = static_cast<int>(std::floor(py));
        const double fx = px - x0, fy = py - y0;
        const double w[2][2] = {{(1 - fy) * (1 - fx), (1 - fy) * fx},
                                {fy * (1 - fx), fy * fx}};
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const int x = x0 + dx, y = y0 + dy;
                if (x >= 0 && x < size && y >= 0 && y < size) kernel.at(y, x) += w[dy][dx];
            }
    }
    const double total = kernel.sum();
    if (!(total > 0)) throw ContractError("rasterize_trajectory: trajectory misses the kernel");
    for (double& w : kernel.weights) w /= total;
    return kernel;
}

BlurKernel synth_motion_kernel(int size, double intensity, Rng& rng) {
    if (size < 3 || size % 2 == 0)
        throw ContractError("synth_motion_kernel: size must be odd and >= 3");
    if (!(intensity >= 0.0 && intensity <= 1.0))
        throw ContractError("synth_motion_kernel: intensity must lie in [0,1]");

    const int n_steps = static_cast<int>(std::ceil(size * 3.0));
    std::vector<Eigen::Vector2d> points;
    points.reserve(static_cast<size_t>(n_steps) + 1);

    double heading = rng.uniform(0.0, 2.0 * M_PI);
    Eigen::Vector2d p(0.0, 0.0);
    points.push_back(p);
    for (int s = 0; s < n_steps; ++s) {
        heading += rng.normal(0.0, intensity * M_PI / 2.0);
        p += Eigen::Vector2d(std::cos(heading), std::sin(heading));
        points.push_back(p);
    }

    Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
    for (const auto& q : points) centroid += q;
    centroid /= static_cast<double>(points.size());

    double half_extent = 0.0;
    for (auto& q : points) {
        q -= centroid;
        half_extent = std::max({half_extent, std::abs(q.x()), std::abs(q.y())});
    }
    // Fit the path's bounding extent to (size-2) px around the center.
    const double scale = (size - 2) / std::max(2.0 * half_extent, 1e-9);
    for (auto& q : points) q *= scale;

    return rasterize_trajectory(points, size);
}

namespace {

// Mirror-without-edge-repeat is unstable for huge kernels; plain mirror
// (edge repeated) keeps every reflected index legal whenever the kernel is
// smaller than the image, which apply_blur requires anyway.
inline int reflect(int i, int n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
    return i;
}

}  // namespace

Image apply_blur(const Image& image, const BlurKernel& kernel) {
    kernel.validate();
    if (kernel.size >= image.height() || kernel.size >= image.width())
        throw ContractError("apply_blur: kernel must be smaller than the image");

    const int h = image.height(), w = image.width(), c = image.channels();
    const int k = kernel.size, r = k / 2;
    Image out(h, w, c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int dy = 0; dy < k; ++dy) {
                    const int sy = reflect(y + dy - r, h);
                    for (int dx = 0; dx < k; ++dx) {
                        const int sx = reflect(x + dx - r, w);
                        acc += kernel.at(dy, dx) * image.at(sy, sx, ch);
                    }
                }
                out.at(y, x, ch) = static_cast<float>(acc);
            }
        }
    }
    out.clip01();
    return out;
}

namespace {

// Catmull-Rom weights for taps at offsets -1, 0, 1, 2 from floor(coord).
void catmull_rom(double t, double w[4]) {
    const double t2 = t * t, t3 = t2 * t;
    w[0] = -0.5 * t3 + t2 - 0.5 * t;
    w[1] = 1.5 * t3 - 2.5 * t2 + 1.0;
    w[2] = -1.5 * t3 + 2.0 * t2 + 0.5 * t;
    w[3] = 0.5 * t3 - 0.5 * t2;
}

// One resampled position: 4 source taps and their weights.
struct Tap {
    int idx[4];
    double weight[4];
};

std::vector<Tap> make_taps(int n_in, int n_out) {
    std::vector<Tap> taps(static_cast<size_t>(n_out));
    const double scale = static_cast<double>(n_in) / n_out;
    for (int i = 0; i < n_out; ++i) {
        const double src = (i + 0.5) * scale - 0.5;
        const int base = static_cast<int>(std::floor(src));
        double w[4];
        catmull_rom(src - base, w);
        Tap& t = taps[static_cast<size_t>(i)];
        for (int j = 0; j < 4; ++j) {
            t.idx[j] = base - 1 + j;
            t.weight[j] = w[j];
        }
    }
    return taps;
}

// value at a possibly-out-of-range index, linearly extrapolated from the
// two samples at the relevant border.
inline double fetch_extrapolated(const float* line, int stride, int idx, int n) {
    if (idx >= 0 && idx < n) return line[static_cast<size_t>(idx) * stride];
    if (n == 1) return line[0];
    if (idx < 0) {
        const double v0 = line[0], v1 = line[stride];
        return v0 + idx * (v1 - v0);
    }
    const double vl = line[static_cast<size_t>(n - 1) * stride];
    const double vp = line[static_cast<size_t>(n - 2) * stride];
    return vl + (idx - (n - 1)) * (vl - vp);
}

}  // namespace

Image resize_bicubic(const Image& image, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ContractError("resize_bicubic: bad output size");
    const int h = image.height(), w = image.width(), c = image.channels();

    // Horizontal pass (h x out_w), double precision accumulation.
    std::vector<double> mid(static_cast<size_t>(h) * out_w * c);
    const std::vector<Tap> xt = make_taps(w, out_w);
    for (int y = 0; y < h; ++y) {
        for (int ch = 0; ch < c; ++ch) {
            const float* line = image.data() + (static_cast<size_t>(y) * w) * c + ch;
            for (int x = 0; x < out_w; ++x) {
                const Tap& t = xt[static_cast<size_t>(x)];
                double acc = 0;
                for (int j = 0; j < 4; ++j)
                    acc += t.weight[j] * fetch_extrapolated(line, c, t.idx[j], w);
                mid[(static_cast<size_t>(y) * out_w + x) * c + ch] = acc;
            }
        }
    }

    // Vertical pass (out_h x out_w).
    Image out(out_h, out_w, c);
    const std::vector<Tap> yt = make_taps(h, out_h);
    std::vector<double> col(static_cast<size_t>(h));
    for (int x = 0; x < out_w; ++x) {
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < h; ++y)
                col[static_cast<size_t>(y)] = mid[(static_cast<size_t>(y) * out_w + x) * c + ch];
            for (int y = 0; y < out_h; ++y) {
                const Tap& t = yt[static_cast<size_t>(y)];
                double acc = 0;
                for (int j = 0; j < 4; ++j) {
                    const int idx = t.idx[j];
                    double v;
                    if (idx >= 0 && idx < h) {
                        v = col[static_cast<size_t>(idx)];
                    } else if (h == 1) {
                        v = col[0];
                    } else if (idx < 0) {
                        v = col[0] + idx * (col[1] - col[0]);
                    } else {
                        v = col[static_cast<size_t>(h - 1)] +
                            (idx - (h - 1)) * (col[static_cast<size_t>(h - 1)] -
                                               col[static_cast<size_t>(h - 2)]);
                    }
                    acc += t.weight[j] * v;
                }
                out.at(y, x, ch) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

Image degrade_sr(const Image& image, int factor) {
    if (factor < 2) throw ContractError("degrade_sr: factor must be >= 2");
    if (image.height() % factor != 0 || image.width() % factor != 0)
        throw ContractError("degrade_sr: image size must be divisible by the factor");
    Image low = resize_bicubic(image, image.height() / factor, image.width() / factor);
    Image up = resize_bicubic(low, image.height(), image.width());
    up.clip01();
    return up;
}

ViewSet degrade_viewset(const ViewSet& vs, const DegradeTask& task, uint64_t seed) {
    vs.validate("degrade_viewset");
    ViewSet out = vs;
    for (int i = 0; i < vs.n_views(); ++i) {
        Image& img = out.images[static_cast<size_t>(i)];
        if (task.kind == DegradeTask::Kind::Deblur) {
            Rng rng(hash_combine(seed, static_cast<uint64_t>(i)));
            const int size = sample_kernel_size(task.blur, rng);
            const double intensity =
                rng.uniform(task.blur.intensity_min, task.blur.intensity_max);
            const BlurKernel kernel = synth_motion_kernel(size, intensity, rng);
            img = apply_blur(img, kernel);
        } else {
            img = degrade_sr(img, task.sr_factor);
        }
    }
    return out;
}

}  // namespace mvr
