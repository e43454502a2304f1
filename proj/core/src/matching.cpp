#include <algorithm>
#include <cmath>
#include <vector>

#include "mvr/errors.hpp"
#include "mvr/metrics.hpp"

namespace mvr {

namespace {

constexpr int kDescRadius = 4;  // 9x9 descriptor patch
constexpr int kDescDim = 81;

struct Corner {
    int y = 0, x = 0;
    double response = 0;
};

std::vector<double> to_gray(const Image& im) {
    std::vector<double> g(static_cast<size_t>(im.height()) * im.width());
    for (int y = 0; y < im.height(); ++y)
        for (int x = 0; x < im.width(); ++x)
            g[static_cast<size_t>(y) * im.width() + x] = im.gray_at(y, x);
    return g;
}

/// Harris corner responses: Sobel gradients, 3x3-summed structure tensor,
/// R = det - 0.04 trace^2, then 3x3 non-max suppression.  Corners keep a
/// kDescRadius border margin so descriptor patches always fit.
std::vector<Corner> harris_corners(const std::vector<double>& g, int h, int w) {
    std::vector<Corner> corners;
    if (h < 2 * kDescRadius + 3 || w < 2 * kDescRadius + 3) return corners;

    const auto at = [&](const std::vector<double>& m, int y, int x) {
        return m[static_cast<size_t>(y) * w + x];
    };

    std::vector<double> ix(g.size(), 0.0), iy(g.size(), 0.0);
    for (int y = 1; y < h - 1; ++y)
        for (int x = 1; x < w - 1; ++x) {
            ix[static_cast<size_t>(y) * w + x] =
                (at(g, y - 1, x + 1) + 2 * at(g, y, x + 1) + at(g, y + 1, x + 1) -
                 at(g, y - 1, x - 1) - 2 * at(g, y, x - 1) - at(g, y + 1, x - 1)) /
                8.0;
            iy[static_cast<size_t>(y) * w + x] =
                (at(g, y + 1, x - 1) + 2 * at(g, y + 1, x) + at(g, y + 1, x + 1) -
                 at(g, y - 1, x - 1) - 2 * at(g, y - 1, x) - at(g, y - 1, x + 1)) /
                8.0;
        }

    std::vector<double> response(g.size(), 0.0);
    for (int y = 2; y < h - 2; ++y)
        for (int x = 2; x < w - 2; ++x) {
            double sxx = 0, syy = 0, sxy = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const double gx = at(ix, y + dy, x + dx);
                    const double gy = at(iy, y + dy, x + dx);
                    sxx += gx * gx;
                    syy += gy * gy;
                    sxy += gx * gy;
                }
            response[static_cast<size_t>(y) * w + x] =
                sxx * syy - sxy * sxy - 0.04 * (sxx + syy) * (sxx + syy);
        }

    const int margin = std::max(3, kDescRadius);
    for (int y = margin; y < h - margin; ++y)
        for (int x = margin; x < w - margin; ++x) {
            const double r = at(response, y, x);
            if (r <= 1e-10) continue;
            bool is_max = true;
            for (int dy = -1; dy <= 1 && is_max; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    if (at(response, y + dy, x + dx) >= r) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) corners.push_back({y, x, r});
        }
    return corners;
}

/// Zero-mean, unit-norm 9x9 gray patch; empty when the patch is flat.
std::vector<double> descriptor(const std::vector<double>& g, int w, int cy, int cx) {
    std::vector<double> d(kDescDim);
    double mean = 0;
    int k = 0;
    for (int dy = -kDescRadius; dy <= kDescRadius; ++dy)
        for (int dx = -kDescRadius; dx <= kDescRadius; ++dx) {
            d[static_cast<size_t>(k++)] = g[static_cast<size_t>(cy + dy) * w + (cx + dx)];
            mean += d[static_cast<size_t>(k - 1)];
        }
    mean /= kDescDim;
    double norm = 0;
    for (double& v : d) {
        v -= mean;
        norm += v * v;
    }
    if (norm < 1e-12) return {};
    norm = std::sqrt(norm);
    for (double& v : d) v /= norm;
    return d;
}

struct DescriptorSet {
    std::vector<std::vector<double>> descs;
};

DescriptorSet describe(const Image& im, const std::vector<std::pair<int, int>>& corners) {
    const std::vector<double> g = to_gray(im);
    DescriptorSet set;
    for (const auto& [y, x] : corners) {
        std::vector<double> d = descriptor(g, im.width(), y, x);
        if (!d.empty()) set.descs.push_back(std::move(d));
    }
    return set;
}

double ncc(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0;
    for (int i = 0; i < kDescDim; ++i)
        dot += a[static_cast<size_t>(i)] * b[static_cast<size_t>(i)];
    return dot;  // descriptors are zero-mean unit-norm already
}

}  // namespace

std::vector<std::pair<int, int>> detect_corners(const Image& image, int max_corners) {
    if (max_corners < 1) throw ContractError("detect_corners: max_corners must be positive");
    std::vector<Corner> corners = harris_corners(to_gray(image), image.height(), image.width());
    std::sort(corners.begin(), corners.end(),
              [](const Corner& a, const Corner& b) { return a.response > b.response; });
    if (static_cast<int>(corners.size()) > max_corners)
        corners.resize(static_cast<size_t>(max_corners));

    std::vector<std::pair<int, int>> out;
    out.reserve(corners.size());
    for (const Corner& c : corners) out.emplace_back(c.y, c.x);
    return out;
}

NccMatcher::NccMatcher(int max_corners, double ratio) : max_corners_(max_corners), ratio_(ratio) {
    if (max_corners < 1) throw ContractError("NccMatcher: max_corners must be positive");
    if (!(ratio > 0.0) || !(ratio <= 1.0)) throw ContractError("NccMatcher: ratio must be in (0, 1]");
}

int NccMatcher::count_matches(const Image& a, const Image& b) const {
    const DescriptorSet da = describe(a, detect_corners(a, max_corners_));
    const DescriptorSet db = describe(b, detect_corners(b, max_corners_));
    if (da.descs.empty() || db.descs.empty()) return 0;

    const auto best_two = [](const std::vector<double>& d,
                             const std::vector<std::vector<double>>& pool) {
        int best = -1;
        double s1 = -2.0, s2 = -2.0;  // NCC lower bound is -1
        for (size_t j = 0; j < pool.size(); ++j) {
            const double s = ncc(d, pool[j]);
            if (s > s1) {
                s2 = s1;
                s1 = s;
                best = static_cast<int>(j);
            } else if (s > s2) {
                s2 = s;
            }
        }
        return std::tuple<int, double, double>(best, s1, s2);
    };

    // Backward pass: each b-descriptor's favorite a-descriptor.
    std::vector<int> back_best(db.descs.size(), -1);
    for (size_t j = 0; j < db.descs.size(); ++j)
        back_best[j] = std::get<0>(best_two(db.descs[j], da.descs));

    // Forward pass with Lowe-style ratio test on NCC distances (1 - score),
    // then mutual-best filtering.
    int count = 0;
    for (size_t i = 0; i < da.descs.size(); ++i) {
        const auto [j, s1, s2] = best_two(da.descs[i], db.descs);
        if (j < 0) continue;
        const double d1 = 1.0 - s1;
        const double d2 = 1.0 - s2;
        if (!(d1 < ratio_ * d2)) continue;
        if (back_best[static_cast<size_t>(j)] == static_cast<int>(i)) ++count;
    }
    return count;
}

std::unique_ptr<Matcher> default_matcher() { return std::make_unique<NccMatcher>(); }

}  // namespace mvr
