#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mvr/image.hpp"
#include "mvr/rng.hpp"
#include "mvr/scene.hpp"

namespace mvr {

/// Odd-sized non-negative convolution kernel summing to 1.
struct BlurKernel {
    int size = 0;
    std::vector<double> weights;  // size*size, row-major

    double& at(int y, int x) { return weights[static_cast<size_t>(y) * size + x]; }
    const double& at(int y, int x) const { return weights[static_cast<size_t>(y) * size + x]; }

    double sum() const;
    /// Throws ContractError if any invariant is broken (odd size, weights
    /// >= 0, unit sum within 1e-6).
    void validate() const;
};

struct BlurParams {
    double size_mean = 85.0;
    double size_std = 12.75;
    double intensity_min = 0.0;
    double intensity_max = 0.4;
};

/// Draws Normal(size_mean, size_std), rounds to the nearest odd integer and
/// clamps to [3, largest odd <= 2*size_mean - 1].
int sample_kernel_size(const BlurParams& params, Rng& rng);

/// Bilinearly splats trajectory points (offsets from the kernel center, in
/// pixels) onto a size×size grid and normalizes to unit sum.  Contributions
/// falling outside the grid are dropped; an all-outside trajectory is a
/// contract error.  Exposed so tests can drive the rasterizer with
/// hand-built (e.g. degenerate) paths.
BlurKernel rasterize_trajectory(const std::vector<Eigen::Vector2d>& points, int size);

/// Synthesizes a motion-blur kernel from a random trajectory: ceil(size*3)
/// unit steps whose heading performs a Gaussian random walk of per-step std
/// intensity*(pi/2) (initial heading uniform); the path is centered on its
/// centroid, scaled so its extent fits within (size-2) px, then rasterized
/// with rasterize_trajectory.  intensity 0 yields a straight streak.
/// Deterministic in (size, intensity, rng state).
BlurKernel synth_motion_kernel(int size, double intensity, Rng& rng);

/// Correlation-style 2D filtering per channel with mirror padding (edge
/// pixel repeated: index -1 maps to 0), clipped to [0,1] once at the end.
Image apply_blur(const Image& image, const BlurKernel& kernel);

/// Separable Catmull-Rom (a = -0.5) resampling with half-pixel-centered
/// coordinate mapping.  Out-of-range taps are linearly extrapolated from
/// the two border samples, so degree-1 image ramps are reproduced exactly
/// everywhere, borders included.  No clipping (callers clip once).
Image resize_bicubic(const Image& image, int out_h, int out_w);

/// Bicubic downsample by `factor`, then bicubic upsample back; clipped to
/// [0,1].  Requires h and w divisible by factor.
Image degrade_sr(const Image& image, int factor);

/// Degradation task switch used by degrade_viewset and the trainer.
struct DegradeTask {
    enum class Kind { Deblur, SR };
    Kind kind = Kind::Deblur;
    BlurParams blur;
    int sr_factor = 4;
};

/// Applies the task to every view independently.  View i draws from a
/// sub-stream seeded hash_combine(seed, i), so results are deterministic in
/// `seed` and independent of evaluation order.  Depths/cameras/ids pass
/// through untouched.
ViewSet degrade_viewset(const ViewSet& vs, const DegradeTask& task, uint64_t seed);

}  // namespace mvr
