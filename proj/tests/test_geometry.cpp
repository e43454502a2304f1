#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mvr/geometry.hpp"
#include "mvr/rng.hpp"
#include "mvr/synthetic.hpp"

using namespace mvr;

namespace {

Camera make_camera(double fx, double fy, double cx, double cy, const Eigen::Matrix3d& r,
                   const Eigen::Vector3d& t, int h, int w) {
    Camera cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = cx;
    cam.cy = cy;
    cam.height = h;
    cam.width = w;
    cam.world_to_camera.setIdentity();
    cam.world_to_camera.topLeftCorner<3, 3>() = r;
    cam.world_to_camera.topRightCorner<3, 1>() = t;
    return cam;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
    Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    return q.toRotationMatrix();
}

}  // namespace

TEST_CASE("pinhole: worked examples") {
    const Camera cam =
        make_camera(100, 100, 32, 32, Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero(), 64, 64);

    // Pixel 10 columns right of the principal point, 2 m out.
    const Eigen::Vector3d p = unproject(cam, 42, 32, 2.0);
    CHECK(p.x() == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(p.y() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.z() == doctest::Approx(2.0).epsilon(1e-12));

    const Projection back = project(cam, p);
    REQUIRE(back.in_front);
    CHECK(back.u == doctest::Approx(42.0).epsilon(1e-12));
    CHECK(back.v == doctest::Approx(32.0).epsilon(1e-12));
    CHECK(back.depth == doctest::Approx(2.0).epsilon(1e-12));

    // Principal point maps onto the optical axis.
    const Eigen::Vector3d axis = unproject(cam, 32, 32, 5.0);
    CHECK(axis.x() == doctest::Approx(0.0));
    CHECK(axis.y() == doctest::Approx(0.0));

    // world_to_camera translation of +1 in z adds one meter of depth.
    const Camera shifted = make_camera(100, 100, 32, 32, Eigen::Matrix3d::Identity(),
                                       Eigen::Vector3d(0, 0, 1), 64, 64);
    const Projection deep = project(shifted, Eigen::Vector3d(0, 0, 3));
    REQUIRE(deep.in_front);
    CHECK(deep.depth == doctest::Approx(4.0).epsilon(1e-12));

    // Points at or behind the camera have no projection.
    CHECK_FALSE(project(cam, Eigen::Vector3d(0, 0, 0)).in_front);
    CHECK_FALSE(project(cam, Eigen::Vector3d(1, 1, -2)).in_front);
    CHECK_THROWS_AS((void)unproject(cam, 5, 5, 0.0), ContractError);
    CHECK_THROWS_AS((void)unproject(cam, 5, 5, -1.0), ContractError);
}

TEST_CASE("pinhole: project/unproject round trip under random rigid poses") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Matrix3d r = random_rotation(rng);
        const Eigen::Vector3d t(rng.normal(), rng.normal(), rng.normal());
        const double fx = 40 + 200 * rng.uniform(), fy = 40 + 200 * rng.uniform();
        const Camera cam =
            make_camera(fx, fy, 31.5 + rng.normal(), 23.5 + rng.normal(), r, t, 48, 64);
        cam.validate("round trip");

        for (int k = 0; k < 20; ++k) {
            const double u = rng.uniform() * 63, v = rng.uniform() * 47;
            const double d = 0.5 + 9.5 * rng.uniform();
            const Projection p = project(cam, unproject(cam, u, v, d));
            REQUIRE(p.in_front);
            CHECK(std::abs(p.u - u) < 1e-6);
            CHECK(std::abs(p.v - v) < 1e-6);
            CHECK(std::abs(p.depth - d) < 1e-6);
        }
    }
}

TEST_CASE("correspondences: identical views map every pixel to itself") {
    SyntheticSceneParams params;
    params.n_views = 2;
    params.seed = 4;
    const Scene scene = generate_synthetic_scene(params);
    const View& v = scene.views[0];

    const CorrespondenceField field =
        compute_correspondences(v.depth, v.camera, v.depth, v.camera);
    CHECK(field.count(CorrState::Occluded) == 0);
    CHECK(field.count(CorrState::Inconsistent) == 0);
    CHECK(field.count(CorrState::OutOfFrame) == 0);
    CHECK(field.count(CorrState::Valid) == v.depth.count_valid());
    CHECK(field.count(CorrState::NoSource) ==
          static_cast<int64_t>(params.height) * params.width - v.depth.count_valid());
    for (int y = 0; y < params.height; ++y)
        for (int x = 0; x < params.width; ++x)
            if (field.valid(y, x)) {
                REQUIRE(field.u_at(y, x) == doctest::Approx(x).epsilon(1e-6));
                REQUIRE(field.v_at(y, x) == doctest::Approx(y).epsilon(1e-6));
            }

    CHECK(overlap_ratio(v.depth, v.camera, v.depth, v.camera) == doctest::Approx(1.0));
}

TEST_CASE("correspondences: two-plane occlusion matches the analytic oracle exactly") {
    // Both cameras look down +z at an infinite far plane z=4; a near square
    // (x in [0.5,1.5], y in [-0.5,0.5]) at z=2 sits outside the source
    // frustum but occludes part of the far plane in the destination view.
    const int hw = 64;
    const double f = 50, c = 31.5;
    const Camera src_cam = make_camera(f, f, c, c, Eigen::Matrix3d::Identity(),
                                       Eigen::Vector3d(1, 0, 0), hw, hw);  // eye (-1, 0, 0)
    const Camera dst_cam = make_camera(f, f, c, c, Eigen::Matrix3d::Identity(),
                                       Eigen::Vector3d(-1.5, 0, 0), hw, hw);  // eye (1.5, 0, 0)

    auto hits_square = [&](double x_world, double y_world) {
        return x_world >= 0.5 && x_world <= 1.5 && y_world >= -0.5 && y_world <= 0.5;
    };

    DepthMap src_depth(hw, hw), dst_depth(hw, hw);
    for (int v = 0; v < hw; ++v)
        for (int u = 0; u < hw; ++u) {
            src_depth.at(v, u) = 4.0f;  // near square lies outside this frustum
            const double x_at_2 = 1.5 + 2.0 * (u - c) / f;
            const double y_at_2 = 2.0 * (v - c) / f;
            dst_depth.at(v, u) = hits_square(x_at_2, y_at_2) ? 2.0f : 4.0f;
        }

    const CorrespondenceField field =
        compute_correspondences(src_depth, src_cam, dst_depth, dst_cam);

    int64_t occluded = 0;
    for (int v = 0; v < hw; ++v)
        for (int u = 0; u < hw; ++u) {
            // Independent re-derivation: the source pixel sees the far plane
            // at world (-1 + 4(u-c)/f, 4(v-c)/f, 4); project into dst with
            // the same nearest-pixel convention and z-test it.
            const double xw = -1.0 + 4.0 * (u - c) / f;
            const double yw = 4.0 * (v - c) / f;
            const double pu = f * (xw - 1.5) / 4.0 + c;
            const double pv = f * yw / 4.0 + c;
            const int px = static_cast<int>(std::lround(pu));
            const int py = static_cast<int>(std::lround(pv));
            CorrState want;
            if (px < 0 || px >= hw || py < 0 || py >= hw)
                want = CorrState::OutOfFrame;
            else if (dst_depth.at(py, px) == 2.0f)
                want = CorrState::Occluded;  // projects 2 m behind the square
            else
                want = CorrState::Valid;
            REQUIRE(field.state_at(v, u) == want);
            occluded += want == CorrState::Occluded;
        }
    CHECK(occluded > 0);
    CHECK(field.count(CorrState::Occluded) == occluded);
    CHECK(field.count(CorrState::Valid) + occluded + field.count(CorrState::OutOfFrame) ==
          static_cast<int64_t>(hw) * hw);
}

TEST_CASE("correspondences: disjoint frusta never match") {
    const int hw = 32;
    const Camera fwd = make_camera(40, 40, 15.5, 15.5, Eigen::Matrix3d::Identity(),
                                   Eigen::Vector3d::Zero(), hw, hw);
    Eigen::Matrix3d flip;  // yaw by pi: looks down -z
    flip << -1, 0, 0, 0, 1, 0, 0, 0, -1;
    const Camera away = make_camera(40, 40, 15.5, 15.5, flip, Eigen::Vector3d::Zero(), hw, hw);

    DepthMap d(hw, hw);
    for (int y = 0; y < hw; ++y)
        for (int x = 0; x < hw; ++x) d.at(y, x) = 3.0f;

    const CorrespondenceField field = compute_correspondences(d, fwd, d, away);
    CHECK(field.count(CorrState::Valid) == 0);
    CHECK(field.count(CorrState::OutOfFrame) == static_cast<int64_t>(hw) * hw);
    CHECK(overlap_ratio(d, fwd, d, away) == 0.0);
}

TEST_CASE("overlap: synthetic pair matches a brute-force recount") {
    SyntheticSceneParams params;
    params.n_views = 3;
    params.seed = 17;
    const Scene scene = generate_synthetic_scene(params);
    const View& a = scene.views[0];
    const View& b = scene.views[1];

    // Straight-line reimplementation of the definition.
    int64_t n_src = 0, n_valid = 0;
    for (int y = 0; y < params.height; ++y)
        for (int x = 0; x < params.width; ++x) {
            const float d = a.depth.at(y, x);
            if (!(d > 0)) continue;
            ++n_src;
            const Projection p = project(b.camera, unproject(a.camera, x, y, d));
            if (!p.in_front) continue;
            const int px = static_cast<int>(std::lround(p.u));
            const int py = static_cast<int>(std::lround(p.v));
            if (px < 0 || px >= params.width || py < 0 || py >= params.height) continue;
            const float bd = b.depth.at(py, px);
            if (bd > 0 && std::abs(p.depth - bd) < 0.1) ++n_valid;
        }
    REQUIRE(n_src > 0);
    CHECK(overlap_ratio(a.depth, a.camera, b.depth, b.camera) ==
          doctest::Approx(static_cast<double>(n_valid) / n_src).epsilon(1e-12));
}

TEST_CASE("view selection: constructed scene with known pairwise overlaps") {
    // Ten coincident views; view k invalidates depth rows [4k, 4k+12) mod 40.
    // Directional overlap depends only on circular index distance d:
    //   d=1 -> 6/7 (too high), d=2 -> 5/7 (in range), d>=3 -> 4/7 (too low).
    const int n = 10, hw = 40;
    const Camera cam = make_camera(40, 40, 19.5, 19.5, Eigen::Matrix3d::Identity(),
                                   Eigen::Vector3d::Zero(), hw, hw);
    Scene scene;
    scene.scene_id = "rings";
    for (int k = 0; k < n; ++k) {
        View view;
        view.image = Image::constant(hw, hw, 3, 0.5f);
        view.depth = DepthMap(hw, hw);
        for (int y = 0; y < hw; ++y) {
            const bool invalid = ((y - 4 * k) % hw + hw) % hw < 12;
            for (int x = 0; x < hw; ++x) view.depth.at(y, x) = invalid ? 0.0f : 3.0f;
        }
        view.camera = cam;
        scene.views.push_back(std::move(view));
    }

    auto circ = [n](int a, int b) { return std::min(std::abs(a - b), n - std::abs(a - b)); };
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            if (a == b) continue;
            const double want = (16 + std::max(0, 12 - 4 * circ(a, b))) / 28.0;
            REQUIRE(overlap_ratio(scene.views[a].depth, scene.views[a].camera,
                                  scene.views[b].depth, scene.views[b].camera) ==
                    doctest::Approx(want).epsilon(1e-12));
        }

    const auto lists = select_view_sets(scene, 0.6, 0.8, 8);
    REQUIRE(lists.size() == static_cast<size_t>(n));
    for (int a = 0; a < n; ++a) {
        std::vector<int> want;
        for (int b = 0; b < n; ++b)
            if (b != a && circ(a, b) == 2) want.push_back(b);
        CHECK(lists[a] == want);
    }

    // Truncation keeps the first hits in index order.
    const auto truncated = select_view_sets(scene, 0.6, 0.8, 1);
    for (int a = 0; a < n; ++a) {
        REQUIRE(truncated[a].size() == 1);
        CHECK(truncated[a][0] == lists[a][0]);
    }

    // A permissive range admits everything, capped at list_size.
    const auto all = select_view_sets(scene, 0.0, 1.0, 8);
    for (int a = 0; a < n; ++a) {
        REQUIRE(all[a].size() == 8);
        std::vector<int> expect;
        for (int b = 0; b < n && expect.size() < 8; ++b)
            if (b != a) expect.push_back(b);
        CHECK(all[a] == expect);
    }

    // A range nothing satisfies yields empty lists, not errors.
    for (const auto& list : select_view_sets(scene, 0.95, 1.0, 8)) CHECK(list.empty());

    CHECK_THROWS_AS((void)select_view_sets(scene, 0.6, 0.8, 0), ContractError);
    Scene single;
    single.scene_id = "one";
    single.views.push_back(scene.views[0]);
    CHECK_THROWS_AS((void)select_view_sets(single, 0.6, 0.8, 8), ContractError);
}

TEST_CASE("fit_affine: recovery, degeneracy, equivariance") {
    Rng rng(5);
    Affine2D truth;
    truth << 1.2, -0.3, 4.0, 0.25, 0.9, -2.0;

    std::vector<Eigen::Vector2d> src, dst;
    for (int i = 0; i < 8; ++i) {
        const Eigen::Vector2d s(10 * rng.uniform(), 10 * rng.uniform());
        src.push_back(s);
        dst.push_back(truth * Eigen::Vector3d(s.x(), s.y(), 1.0));
    }
    const Affine2D fit = fit_affine(src, dst);
    CHECK((fit - truth).cwiseAbs().maxCoeff() < 1e-6);

    // Identity fit.
    const Affine2D id = fit_affine(src, src);
    Affine2D want_id;
    want_id << 1, 0, 0, 0, 1, 0;
    CHECK((id - want_id).cwiseAbs().maxCoeff() < 1e-9);

    // Shifting every destination point shifts only the translation column.
    std::vector<Eigen::Vector2d> shifted = dst;
    for (auto& p : shifted) p += Eigen::Vector2d(3.25, -1.5);
    const Affine2D fit2 = fit_affine(src, shifted);
    CHECK((fit2.leftCols<2>() - fit.leftCols<2>()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(fit2(0, 2) - fit(0, 2) == doctest::Approx(3.25).epsilon(1e-9));
    CHECK(fit2(1, 2) - fit(1, 2) == doctest::Approx(-1.5).epsilon(1e-9));

    // Collinear sources leave the fit underdetermined.
    std::vector<Eigen::Vector2d> line, line_dst;
    for (int i = 0; i < 5; ++i) {
        line.emplace_back(i * 2.0, i * 1.0);
        line_dst.emplace_back(i * 1.0, 3.0);
    }
    CHECK_THROWS_AS((void)fit_affine(line, line_dst), ContractError);
    CHECK_THROWS_AS((void)fit_affine({{0, 0}, {1, 1}}, {{0, 0}, {1, 1}}), ContractError);
    CHECK_THROWS_AS((void)fit_affine(src, line), ContractError);  // size mismatch
}

TEST_CASE("warp_patch_affine: crops, shifts, subpixel ramps, clamping") {
    const int h = 32, w = 40;
    Image im(h, w, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                im.at(y, x, c) = 0.1f + 0.004f * (c + 1) * x + 0.006f * y;

    Affine2D identity;
    identity << 1, 0, 0, 0, 1, 0;

    const Image crop = warp_patch_affine(im, 5, 7, 9, identity);
    for (int py = 0; py < 9; ++py)
        for (int px = 0; px < 9; ++px)
            for (int c = 0; c < 3; ++c) REQUIRE(crop.at(py, px, c) == im.at(5 + py, 7 + px, c));

    // Integer translation = crop elsewhere.
    Affine2D shift = identity;
    shift(0, 2) = 3;
    shift(1, 2) = 2;
    const Image moved = warp_patch_affine(im, 5, 7, 9, shift);
    for (int py = 0; py < 9; ++py)
        for (int px = 0; px < 9; ++px)
            for (int c = 0; c < 3; ++c) REQUIRE(moved.at(py, px, c) == im.at(7 + py, 10 + px, c));

    // Subpixel shift of an affine image is reproduced exactly by bilinear
    // interpolation (interior samples only).
    Affine2D sub = identity;
    sub(0, 2) = 0.5;
    sub(1, 2) = 0.25;
    const Image warped = warp_patch_affine(im, 5, 7, 9, sub);
    for (int py = 0; py < 9; ++py)
        for (int px = 0; px < 9; ++px)
            for (int c = 0; c < 3; ++c) {
                const double want = 0.1 + 0.004 * (c + 1) * (7 + px + 0.5) + 0.006 * (5 + py + 0.25);
                REQUIRE(warped.at(py, px, c) == doctest::Approx(want).epsilon(1e-5));
            }

    // Far out-of-bounds samples clamp to the nearest border pixel.
    Affine2D faraway = identity;
    faraway(0, 2) = -1000;
    faraway(1, 2) = -1000;
    const Image corner = warp_patch_affine(im, 0, 0, 4, faraway);
    for (int py = 0; py < 4; ++py)
        for (int px = 0; px < 4; ++px)
            for (int c = 0; c < 3; ++c) REQUIRE(corner.at(py, px, c) == im.at(0, 0, c));

    CHECK_THROWS_AS((void)warp_patch_affine(im, 0, 0, 0, identity), ContractError);
}
