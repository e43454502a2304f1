#include "mvr/geometry.hpp"

#include <cmath>

#include "mvr/errors.hpp"

namespace mvr {

Eigen::Vector3d unproject(const Camera& cam, double u, double v, double depth) {
    if (!(depth > 0)) throw ContractError("unproject: depth must be positive");
    const Eigen::Vector3d x_cam((u - cam.cx) / cam.fx * depth, (v - cam.cy) / cam.fy * depth,
                                depth);
    return cam.cam_to_world(x_cam);
}

Projection project(const Camera& cam, const Eigen::Vector3d& world_point) {
    const Eigen::Vector3d x_cam = cam.world_to_cam(world_point);
    Projection p;
    if (x_cam.z() <= 1e-9) return p;  // at or behind the camera: no projection
    p.in_front = true;
    p.u = cam.fx * x_cam.x() / x_cam.z() + cam.cx;
    p.v = cam.fy * x_cam.y() / x_cam.z() + cam.cy;
    p.depth = x_cam.z();
    return p;
}

int64_t CorrespondenceField::count(CorrState s) const {
    int64_t n = 0;
    for (CorrState v : state)
        if (v == s) ++n;
    return n;
}

CorrespondenceField compute_correspondences(const DepthMap& src_depth, const Camera& src_cam,
                                            const DepthMap& dst_depth, const Camera& dst_cam,
                                            double occl_thresh) {
    if (src_depth.height() != dst_depth.height() || src_depth.width() != dst_depth.width())
        throw ContractError("compute_correspondences: resolution mismatch");

    const int h = src_depth.height(), w = src_depth.width();
    CorrespondenceField field;
    field.height = h;
    field.width = w;
    field.u.assign(static_cast<size_t>(h) * w, 0.0f);
    field.v.assign(static_cast<size_t>(h) * w, 0.0f);
    field.state.assign(static_cast<size_t>(h) * w, CorrState::NoSource);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            const float d = src_depth.at(y, x);
            if (!(d > 0.0f)) continue;  // NoSource

            const Eigen::Vector3d point = unproject(src_cam, x, y, d);
            const Projection p = project(dst_cam, point);
            if (!p.in_front) {
                field.state[i] = CorrState::OutOfFrame;
                continue;
            }
            const int px = static_cast<int>(std::lround(p.u));
            const int py = static_cast<int>(std::lround(p.v));
            if (px < 0 || px >= w || py < 0 || py >= h) {
                field.state[i] = CorrState::OutOfFrame;
                continue;
            }
            const float dst_d = dst_depth.at(py, px);
            if (!(dst_d > 0.0f)) {
                field.state[i] = CorrState::NoDepth;
                continue;
            }
            const double diff = p.depth - dst_d;
            if (std::abs(diff) < occl_thresh) {
                field.state[i] = CorrState::Valid;
            } else if (diff >= occl_thresh) {
                field.state[i] = CorrState::Occluded;
            } else {
                field.state[i] = CorrState::Inconsistent;
            }
            field.u[i] = static_cast<float>(p.u);
            field.v[i] = static_cast<float>(p.v);
        }
    }
    return field;
}

double overlap_ratio(const DepthMap& a_depth, const Camera& a_cam, const DepthMap& b_depth,
                     const Camera& b_cam, double occl_thresh) {
    const CorrespondenceField field =
        compute_correspondences(a_depth, a_cam, b_depth, b_cam, occl_thresh);
    const int64_t n_valid_src = a_depth.count_valid();
    if (n_valid_src == 0) return 0.0;
    return static_cast<double>(field.count(CorrState::Valid)) / static_cast<double>(n_valid_src);
}

std::vector<std::vector<int>> select_view_sets(const Scene& scene, double lo, double hi,
                                               int list_size) {
    if (scene.n_views() < 2) throw ContractError("select_view_sets: scene needs >= 2 views");
    if (list_size < 1) throw ContractError("select_view_sets: list_size must be positive");

    const int n = scene.n_views();
    std::vector<std::vector<int>> lists(static_cast<size_t>(n));
    for (int a = 0; a < n; ++a) {
        auto& list = lists[static_cast<size_t>(a)];
        for (int c = 0; c < n && static_cast<int>(list.size()) < list_size; ++c) {
            if (c == a) continue;
            const double r = overlap_ratio(scene.views[static_cast<size_t>(a)].depth,
                                           scene.views[static_cast<size_t>(a)].camera,
                                           scene.views[static_cast<size_t>(c)].depth,
                                           scene.views[static_cast<size_t>(c)].camera);
            if (r >= lo && r <= hi) list.push_back(c);
        }
    }
    return lists;
}

Affine2D fit_affine(const std::vector<Eigen::Vector2d>& src_pts,
                    const std::vector<Eigen::Vector2d>& dst_pts) {
    if (src_pts.size() != dst_pts.size())
        throw ContractError("fit_affine: point list size mismatch");
    const int n = static_cast<int>(src_pts.size());
    if (n < 3) throw ContractError("fit_affine: need at least 3 points");

    Eigen::MatrixXd a(n, 3);
    Eigen::MatrixXd b(n, 2);
    for (int i = 0; i < n; ++i) {
        a(i, 0) = src_pts[static_cast<size_t>(i)].x();
        a(i, 1) = src_pts[static_cast<size_t>(i)].y();
        a(i, 2) = 1.0;
        b(i, 0) = dst_pts[static_cast<size_t>(i)].x();
        b(i, 1) = dst_pts[static_cast<size_t>(i)].y();
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    // Collinear source points leave one affine direction unconstrained.
    qr.setThreshold(1e-9);
    if (qr.rank() < 3) throw ContractError("fit_affine: degenerate fit (collinear points)");

    const Eigen::MatrixXd sol = qr.solve(b);  // 3x2, columns = (u, v) targets
    Affine2D affine;
    affine.row(0) = sol.col(0).transpose();
    affine.row(1) = sol.col(1).transpose();
    return affine;
}

namespace {

float sample_bilinear_clamped(const Image& image, double u, double v, int c) {
    const int w = image.width(), h = image.height();
    const double cu = std::min(std::max(u, 0.0), static_cast<double>(w - 1));
    const double cv = std::min(std::max(v, 0.0), static_cast<double>(h - 1));
    const int x0 = static_cast<int>(std::floor(cu));
    const int y0 = static_cast<int>(std::floor(cv));
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fu = cu - x0, fv = cv - y0;
    return static_cast<float>((1 - fv) * ((1 - fu) * image.at(y0, x0, c) + fu * image.at(y0, x1, c)) +
                              fv * ((1 - fu) * image.at(y1, x0, c) + fu * image.at(y1, x1, c)));
}

}  // namespace

Image warp_patch_affine(const Image& image, int top, int left, int size, const Affine2D& affine) {
    if (size < 1) throw ContractError("warp_patch_affine: size must be positive");
    Image patch(size, size, image.channels());
    for (int py = 0; py < size; ++py) {
        for (int px = 0; px < size; ++px) {
            const Eigen::Vector3d p(left + px, top + py, 1.0);
            const double su = affine.row(0).dot(p);
            const double sv = affine.row(1).dot(p);
            for (int c = 0; c < image.channels(); ++c)
                patch.at(py, px, c) = sample_bilinear_clamped(image, su, sv, c);
        }
    }
    return patch;
}

}  // namespace mvr
