#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mvr/camera.hpp"
#include "mvr/image.hpp"
#include "mvr/scene.hpp"

namespace mvr {

/// Pinhole projection result.  `in_front` is false for points at or behind
/// the camera plane (no projection exists); u, v, depth are then unset.
struct Projection {
    double u = 0, v = 0;
    double depth = 0;  // camera-frame z, meters
    bool in_front = false;
};

/// World point of pixel (u, v) at the given camera-frame depth (meters).
/// Inverse of `project`: reprojecting returns (u, v, depth) within 1e-6.
Eigen::Vector3d unproject(const Camera& cam, double u, double v, double depth);

Projection project(const Camera& cam, const Eigen::Vector3d& world_point);

/// Classification of one source pixel when warped into a destination view.
enum class CorrState : uint8_t {
    NoSource,      // source depth invalid
    OutOfFrame,    // projects outside the destination image (or behind it)
    NoDepth,       // destination has no valid depth at the landing pixel
    Occluded,      // projected depth deeper than stored dst depth by >= threshold
    Inconsistent,  // projected depth shallower by >= threshold (geometry disagreement)
    Valid,
};

/// Per-source-pixel warp into a destination view; `u`/`v` hold continuous
/// destination coordinates wherever state is Valid or Occluded.
struct CorrespondenceField {
    int height = 0, width = 0;
    std::vector<float> u, v;
    std::vector<CorrState> state;

    CorrState state_at(int y, int x) const { return state[static_cast<size_t>(y) * width + x]; }
    bool valid(int y, int x) const { return state_at(y, x) == CorrState::Valid; }
    bool occluded(int y, int x) const { return state_at(y, x) == CorrState::Occluded; }
    float u_at(int y, int x) const { return u[static_cast<size_t>(y) * width + x]; }
    float v_at(int y, int x) const { return v[static_cast<size_t>(y) * width + x]; }

    int64_t count(CorrState s) const;
};

/// Warps every valid src pixel into dst and classifies it.  Destination
/// depth is looked up at the nearest pixel (no interpolation: bilinear
/// across depth edges would fabricate phantom surfaces).  A pixel is
/// occluded when it projects *deeper* than the stored destination depth by
/// at least `occl_thresh` meters; projecting *shallower* by the same margin
/// is a geometry inconsistency, not occlusion.
CorrespondenceField compute_correspondences(const DepthMap& src_depth, const Camera& src_cam,
                                            const DepthMap& dst_depth, const Camera& dst_cam,
                                            double occl_thresh = 0.1);

/// Fraction of a's valid-depth pixels with a Valid correspondence in b.
/// Directional (measured from the anchor a); 0 if a has no valid depth.
double overlap_ratio(const DepthMap& a_depth, const Camera& a_cam, const DepthMap& b_depth,
                     const Camera& b_cam, double occl_thresh = 0.1);

/// For each anchor view: remaining views in index order whose
/// overlap_ratio(anchor, candidate) lies in [lo, hi], truncated to
/// list_size.  Anchors with no qualifying candidate get an empty list.
std::vector<std::vector<int>> select_view_sets(const Scene& scene, double lo = 0.6,
                                               double hi = 0.8, int list_size = 8);

/// 2×3 affine map of 2D pixel coordinates: p_dst = A * (u, v, 1)^T.
using Affine2D = Eigen::Matrix<double, 2, 3>;

/// Least-squares affine fit from src to dst points.  Requires >= 3
/// non-collinear points; a rank-deficient system throws ContractError.
Affine2D fit_affine(const std::vector<Eigen::Vector2d>& src_pts,
                    const std::vector<Eigen::Vector2d>& dst_pts);

/// size×size patch whose pixel (py, px) is `image` bilinearly sampled at
/// affine * (left + px, top + py, 1); samples outside the image clamp to
/// the border.  With the identity affine this is an exact crop.
Image warp_patch_affine(const Image& image, int top, int left, int size, const Affine2D& affine);

}  // namespace mvr
