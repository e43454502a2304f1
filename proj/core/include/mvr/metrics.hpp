#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mvr/image.hpp"
#include "mvr/scene.hpp"

namespace mvr {

// ---------------------------------------------------------------------------
// Perceptual distance

/// Abstract perceptual distance over equal-size RGB patches: d(x, x) = 0,
/// symmetric, deterministic.  Implementations are immutable after
/// construction and safe to share across threads.
class PerceptualBackend {
public:
    virtual ~PerceptualBackend() = default;
    virtual double distance(const Image& a, const Image& b) const = 0;
};

/// Deterministic stand-in for a learned perceptual metric: mean cosine
/// distance between fixed seeded-random-projection feature maps (8
/// projections of 5x5 neighborhoods) over a 3-level image pyramid, scaled so
/// that sigma = 0.1 Gaussian corruption of a mid-gray image scores ~0.1.
std::unique_ptr<PerceptualBackend> default_perceptual_backend();

// ---------------------------------------------------------------------------
// Image quality

/// Peak signal-to-noise ratio in dB against peak 1.0, capped at 99 (the
/// identical-image sentinel).
double psnr(const Image& a, const Image& b);

/// Standard SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// valid windows only, per-channel maps averaged.  Requires min dim >= 11.
double ssim(const Image& a, const Image& b);

// ---------------------------------------------------------------------------
// Multi-view consistency

struct VConsisOptions {
    int patch_size = 30;     // non-overlapping tiles anchored at (0, 0)
    int min_points = 300;    // discard patches with fewer correspondences
    double gt_gate = 0.1;    // keep patches whose GT-vs-GT distance is below
    double occl_thresh = 0.1;  // meters, for the correspondence field
};

/// One ordered view pair's contribution to visual consistency.
struct VConsisPair {
    int src = 0, dst = 0;
    int n_kept = 0;       // patches surviving the count and GT gates
    double sum = 0;       // summed backend distances over kept patches
};

/// Per-ordered-pair patch distances behind visual_consistency: for each
/// surviving 30x30 tile of the source view (>= min_points valid GT
/// correspondences), an affine fit of the correspondences pulls the
/// destination image back onto the source grid; the patch is kept when the
/// pulled-back GT is within gt_gate of the source GT patch, and the
/// restored-image distance is accumulated.  `gt` must carry depths+cameras.
std::vector<VConsisPair> vconsis_pairs(const ViewSet& restored, const ViewSet& gt,
                                       const PerceptualBackend& backend,
                                       const VConsisOptions& opt = {});

/// Mean backend distance over all kept patches of all ordered pairs; empty
/// when no patch anywhere survived (never 0-by-default).  Raw scale — table
/// reports multiply by 100.
std::optional<double> visual_consistency(const ViewSet& restored, const ViewSet& gt,
                                         const PerceptualBackend& backend,
                                         const VConsisOptions& opt = {});

/// Least-squares fit of gt ~ scale * pred + bias over pixels valid in both
/// maps.  A constant prediction keeps scale = 1 and fits only the bias.
struct ScaleBias {
    double scale = 1.0, bias = 0.0;
};
ScaleBias fit_depth_scale_bias(const DepthMap& pred, const DepthMap& gt);

/// One ordered view pair's contribution to geometric consistency.
struct GConsisPair {
    int src = 0, dst = 0;
    int64_t n_points = 0;
    double sum_abs = 0;  // meters
};

/// For every non-occluded GT correspondence, the source prediction is lifted
/// along the pixel ray, expressed as a depth in the destination camera, and
/// compared against the destination prediction at the corresponding pixel.
/// Both sides are measured relative to the same GT construction, so exact
/// predictions score exactly 0 with no resampling bias.  With align = true,
/// each prediction is scale/bias-fitted to its GT depth first.
std::vector<GConsisPair> gconsis_pairs(const std::vector<DepthMap>& pred, const ViewSet& gt,
                                       bool align, double occl_thresh = 0.1);

/// Mean |depth disagreement| in meters over all ordered pairs' points;
/// empty when no usable correspondence exists.
std::optional<double> geometric_consistency(const std::vector<DepthMap>& pred,
                                            const ViewSet& gt, bool align,
                                            double occl_thresh = 0.1);

// ---------------------------------------------------------------------------
// Depth accuracy

struct DepthAccuracy {
    double absrel = 0;  // mean |pred - gt| / gt
    double delta1 = 0;  // percent of pixels with max(pred/gt, gt/pred) < 1.25
};

/// Evaluated over pixels valid in both maps (throws if none).  With
/// align = true the prediction is scale/bias-fitted to GT first.
DepthAccuracy absrel_delta1(const DepthMap& pred, const DepthMap& gt, bool align);

// ---------------------------------------------------------------------------
// Correspondence counting

/// Detected corner positions as (y, x), strongest first: Harris responses,
/// 3x3 non-max suppression, borders excluded so a 9x9 patch always fits.
std::vector<std::pair<int, int>> detect_corners(const Image& image, int max_corners = 512);

/// Pluggable feature matcher for the correspondence-count harness.
class Matcher {
public:
    virtual ~Matcher() = default;
    virtual int count_matches(const Image& a, const Image& b) const = 0;
};

/// Built-in toy matcher: top-512 Harris corners, 9x9 zero-normalized
/// cross-correlation descriptors, distance-ratio test at 0.9, mutual-best
/// filtering.
class NccMatcher final : public Matcher {
public:
    explicit NccMatcher(int max_corners = 512, double ratio = 0.9);
    int count_matches(const Image& a, const Image& b) const override;

private:
    int max_corners_;
    double ratio_;
};

std::unique_ptr<Matcher> default_matcher();

int count_correspondences(const Image& a, const Image& b, const Matcher& matcher);

// ---------------------------------------------------------------------------
// Aggregate report

struct ViewMetrics {
    int view = 0;
    double psnr = 0, ssim = 0;
};

struct DepthViewMetrics {
    int view = 0;
    double absrel = 0, delta1 = 0;
};

struct PairMetrics {
    int src = 0, dst = 0;
    std::optional<double> vconsis;  // x100, matching table convention
    std::optional<double> gconsis;  // meters
    int n_vconsis_patches = 0;
    int n_correspondences = 0;
};

/// Everything the eval command reports.  Aggregates are the arithmetic mean
/// of the defined per-view / per-pair entries; a metric with no defined
/// entries stays empty rather than reading as a perfect 0.
struct MetricReport {
    std::string scene_id;
    std::string task;

    std::vector<ViewMetrics> views;
    std::vector<DepthViewMetrics> depth_views;
    std::vector<PairMetrics> pairs;

    std::optional<double> psnr, ssim;
    std::optional<double> vconsis;  // x100
    std::optional<double> gconsis;
    std::optional<double> absrel, delta1;
    std::optional<double> mean_correspondences;
};

/// RGB restoration evaluation: per-view PSNR/SSIM against GT images,
/// per-ordered-pair VConsis (x100) and correspondence counts.
MetricReport evaluate_restoration(const ViewSet& restored, const ViewSet& gt,
                                  const PerceptualBackend& backend, const Matcher& matcher,
                                  const VConsisOptions& opt = {});

/// Depth evaluation: per-view AbsRel/delta1 and per-ordered-pair GConsis.
MetricReport evaluate_depth(const std::vector<DepthMap>& pred, const ViewSet& gt, bool align,
                            double occl_thresh = 0.1);

/// Serializes a report to pretty-printed JSON mirroring the struct fields;
/// undefined metrics serialize as null.
std::string report_to_json(const MetricReport& report);

}  // namespace mvr
