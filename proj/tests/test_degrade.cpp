#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mvr/degrade.hpp"
#include "mvr/synthetic.hpp"

using namespace mvr;

namespace {

// Same mirror convention as apply_blur, restated for the brute-force oracle.
int mirror(int i, int n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
    return i;
}

Image random_image(int h, int w, int c, uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
    Rng rng(seed);
    Image im(h, w, c);
    for (int64_t i = 0; i < im.numel(); ++i)
        im.data()[i] = lo + (hi - lo) * static_cast<float>(rng.uniform());
    return im;
}

double kernel_max(const BlurKernel& k) {
    return *std::max_element(k.weights.begin(), k.weights.end());
}

}  // namespace

TEST_CASE("sample_kernel_size: rounding and clamping law") {
    Rng rng(1);

    // With std 0 the draw is the mean, isolating the rounding rule.
    auto fixed = [&](double mean) {
        BlurParams p;
        p.size_mean = mean;
        p.size_std = 0.0;
        return sample_kernel_size(p, rng);
    };
    CHECK(fixed(85.0) == 85);
    CHECK(fixed(84.9) == 85);
    CHECK(fixed(86.0) == 87);  // odd ties round up
    CHECK(fixed(83.9) == 83);
    CHECK(fixed(1.2) == 3);  // below the floor clamps to the smallest kernel
    CHECK(fixed(2.0) == 3);

    // Large draws clamp to the largest odd size <= 2*mean - 1.
    BlurParams wide;
    wide.size_mean = 10.0;
    wide.size_std = 100.0;
    for (int i = 0; i < 2000; ++i) {
        const int s = sample_kernel_size(wide, rng);
        REQUIRE(s >= 3);
        REQUIRE(s <= 19);
        REQUIRE(s % 2 == 1);
    }

    BlurParams bad;
    bad.size_mean = 0.0;
    CHECK_THROWS_AS((void)sample_kernel_size(bad, rng), ContractError);
}

TEST_CASE("sample_kernel_size: draws are deterministic and unbiased") {
    BlurParams p;  // defaults: Normal(85, 12.75)
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(sample_kernel_size(p, a) == sample_kernel_size(p, b));

    Rng rng(7);
    double sum = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) sum += sample_kernel_size(p, rng);
    CHECK(std::abs(sum / n - 85.0) < 1.0);
}

TEST_CASE("rasterize_trajectory: degenerate path concentrates at the center") {
    // Points within a tenth of a pixel of the center must put essentially
    // all mass on the central cell.
    std::vector<Eigen::Vector2d> jitter;
    Rng rng(3);
    for (int i = 0; i < 50; ++i)
        jitter.emplace_back(0.1 * (rng.uniform() - 0.5), 0.1 * (rng.uniform() - 0.5));
    for (const int size : {3, 9, 85}) {
        const BlurKernel k = rasterize_trajectory(jitter, size);
        k.validate();
        CHECK(k.at(size / 2, size / 2) > 0.9);
    }

    // A single exact-center point is a delta kernel.
    const BlurKernel delta = rasterize_trajectory({Eigen::Vector2d(0, 0)}, 5);
    CHECK(delta.at(2, 2) == doctest::Approx(1.0));

    // Off-grid contributions are dropped; a fully outside path is an error.
    CHECK_THROWS_AS((void)rasterize_trajectory({Eigen::Vector2d(100, 100)}, 5), ContractError);
    CHECK_THROWS_AS((void)rasterize_trajectory({}, 5), ContractError);
    CHECK_THROWS_AS((void)rasterize_trajectory({Eigen::Vector2d(0, 0)}, 4), ContractError);
}

TEST_CASE("synth_motion_kernel: invariants across sizes, intensities, seeds") {
    for (const int size : {3, 7, 21, 85}) {
        for (const double intensity : {0.0, 0.15, 0.5, 1.0}) {
            for (const uint64_t seed : {1ull, 2ull, 3ull}) {
                Rng rng(seed);
                const BlurKernel k = synth_motion_kernel(size, intensity, rng);
                k.validate();  // odd size, non-negative, unit sum
                CHECK(k.size == size);
            }
        }
    }
    Rng rng(9);
    CHECK_THROWS_AS((void)synth_motion_kernel(4, 0.1, rng), ContractError);
    CHECK_THROWS_AS((void)synth_motion_kernel(7, 1.5, rng), ContractError);
    CHECK_THROWS_AS((void)synth_motion_kernel(7, -0.1, rng), ContractError);

    Rng r1(11), r2(11);
    const BlurKernel a = synth_motion_kernel(9, 0.3, r1);
    const BlurKernel b = synth_motion_kernel(9, 0.3, r2);
    CHECK(a.weights == b.weights);
}

TEST_CASE("synth_motion_kernel: zero intensity is a straight streak") {
    for (const uint64_t seed : {1ull, 5ull, 9ull, 33ull}) {
        Rng rng(seed);
        const BlurKernel k = synth_motion_kernel(21, 0.0, rng);

        // Weighted total-least-squares line through the occupied cells; every
        // cell with mass must sit within one pixel of it.
        double wsum = 0, mx = 0, my = 0;
        for (int y = 0; y < k.size; ++y)
            for (int x = 0; x < k.size; ++x) {
                wsum += k.at(y, x);
                mx += k.at(y, x) * x;
                my += k.at(y, x) * y;
            }
        mx /= wsum;
        my /= wsum;
        double sxx = 0, sxy = 0, syy = 0;
        for (int y = 0; y < k.size; ++y)
            for (int x = 0; x < k.size; ++x) {
                const double w = k.at(y, x);
                sxx += w * (x - mx) * (x - mx);
                sxy += w * (x - mx) * (y - my);
                syy += w * (y - my) * (y - my);
            }
        Eigen::Matrix2d cov;
        cov << sxx, sxy, sxy, syy;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
        const Eigen::Vector2d dir = es.eigenvectors().col(1);  // largest eigenvalue

        // Weighted RMS perpendicular distance: the fit residual proper.
        const double rms = std::sqrt(std::max(0.0, es.eigenvalues()(0)) / wsum);
        INFO("seed ", seed, " rms residual ", rms);
        CHECK(rms < 1.0);

        // A 2x2 bilinear splat can push trace mass at most sqrt(2) px off
        // the path; nothing may land beyond that.
        double max_perp = 0;
        for (int y = 0; y < k.size; ++y)
            for (int x = 0; x < k.size; ++x)
                if (k.at(y, x) > 1e-12) {
                    const Eigen::Vector2d d(x - mx, y - my);
                    max_perp = std::max(max_perp, std::abs(d.x() * dir.y() - d.y() * dir.x()));
                }
        INFO("seed ", seed, " max perpendicular distance ", max_perp);
        CHECK(max_perp < 1.45);

        // The streak spans the kernel: mass reaches the outer ring.
        double outer = 0;
        for (int y = 0; y < k.size; ++y)
            for (int x = 0; x < k.size; ++x)
                if (y <= 1 || y >= k.size - 2 || x <= 1 || x >= k.size - 2) outer += k.at(y, x);
        CHECK(outer > 0.0);
    }
}

TEST_CASE("synth_motion_kernel: smallest size keeps the center dominant") {
    // A size-3 streak cannot concentrate like a delta: the unit-length path
    // spreads mass bilinearly over neighbors.  The center cell still holds
    // the single largest share.
    for (const uint64_t seed : {2ull, 4ull, 8ull}) {
        Rng rng(seed);
        const BlurKernel k = synth_motion_kernel(3, 0.0, rng);
        CHECK(k.at(1, 1) > 0.5);
        CHECK(k.at(1, 1) == doctest::Approx(kernel_max(k)));
    }
}

TEST_CASE("apply_blur: identity, constant, and brute-force oracle") {
    const Image im = random_image(12, 14, 3, 5);

    BlurKernel delta;
    delta.size = 5;
    delta.weights.assign(25, 0.0);
    delta.at(2, 2) = 1.0;
    CHECK(apply_blur(im, delta) == im);

    const Image flat = Image::constant(16, 16, 1, 0.37f);
    Rng rng(6);
    const BlurKernel moving = synth_motion_kernel(7, 0.4, rng);
    const Image blurred_flat = apply_blur(flat, moving);
    for (int64_t i = 0; i < blurred_flat.numel(); ++i)
        REQUIRE(blurred_flat.data()[i] == doctest::Approx(0.37f).epsilon(1e-6));

    // 5x5 image, uniform 3x3 kernel, against a nested-loop re-derivation.
    Image tiny(5, 5, 1);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) tiny.at(y, x, 0) = 0.04f * (y * 5 + x);
    BlurKernel box;
    box.size = 3;
    box.weights.assign(9, 1.0 / 9.0);
    const Image got = apply_blur(tiny, box);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) {
            double want = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    want += tiny.at(mirror(y + dy, 5), mirror(x + dx, 5), 0) / 9.0;
            REQUIRE(got.at(y, x, 0) == doctest::Approx(want).epsilon(1e-6));
        }
}

TEST_CASE("apply_blur: linearity and approximate mean preservation") {
    const Image a = random_image(24, 20, 3, 11, 0.1f, 0.9f);
    const Image b = random_image(24, 20, 3, 12, 0.1f, 0.9f);
    Rng rng(13);
    const BlurKernel k = synth_motion_kernel(9, 0.3, rng);

    Image mix(24, 20, 3);
    for (int64_t i = 0; i < mix.numel(); ++i)
        mix.data()[i] = 0.4f * a.data()[i] + 0.5f * b.data()[i];

    const Image blur_mix = apply_blur(mix, k);
    const Image blur_a = apply_blur(a, k);
    const Image blur_b = apply_blur(b, k);
    for (int64_t i = 0; i < mix.numel(); ++i)
        REQUIRE(blur_mix.data()[i] ==
                doctest::Approx(0.4f * blur_a.data()[i] + 0.5f * blur_b.data()[i]).epsilon(1e-5));

    // Mirror padding only redistributes border mass, so the mean moves by
    // less than 1e-3 on a mid-size kernel.
    const Image big = random_image(48, 64, 3, 14);
    Rng rng2(15);
    const BlurKernel k2 = synth_motion_kernel(11, 0.2, rng2);
    const Image blurred = apply_blur(big, k2);
    double mean_in = 0, mean_out = 0;
    for (int64_t i = 0; i < big.numel(); ++i) {
        mean_in += big.data()[i];
        mean_out += blurred.data()[i];
    }
    CHECK(std::abs(mean_in - mean_out) / static_cast<double>(big.numel()) < 1e-3);

    BlurKernel huge;
    huge.size = 25;
    huge.weights.assign(625, 1.0 / 625.0);
    CHECK_THROWS_AS((void)apply_blur(random_image(16, 16, 1, 1), huge), ContractError);

    BlurKernel invalid;
    invalid.size = 3;
    invalid.weights.assign(9, 1.0);  // sums to 9
    CHECK_THROWS_AS((void)apply_blur(random_image(16, 16, 1, 1), invalid), ContractError);
}

TEST_CASE("resize_bicubic: constants, shapes, and exact ramp reproduction") {
    const Image flat = Image::constant(12, 16, 3, 0.62f);
    const Image up = resize_bicubic(flat, 48, 64);
    REQUIRE(up.height() == 48);
    REQUIRE(up.width() == 64);
    REQUIRE(up.channels() == 3);
    for (int64_t i = 0; i < up.numel(); ++i)
        REQUIRE(up.data()[i] == doctest::Approx(0.62f).epsilon(1e-6));

    // An affine image survives down/up resampling exactly (linear taps are
    // extrapolated at the borders, so the edges hold too).
    const int h = 48, w = 64;
    Image ramp(h, w, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) ramp.at(y, x, 0) = 0.1f + 0.008f * x + 0.006f * y;

    const Image down2 = resize_bicubic(ramp, h / 4, w / 4);
    for (int y = 0; y < h / 4; ++y)
        for (int x = 0; x < w / 4; ++x) {
            // Half-pixel mapping: output (x, y) samples input at
            // ((x+0.5)*4-0.5, (y+0.5)*4-0.5).
            const double want = 0.1 + 0.008 * ((x + 0.5) * 4 - 0.5) + 0.006 * ((y + 0.5) * 4 - 0.5);
            REQUIRE(down2.at(y, x, 0) == doctest::Approx(want).epsilon(1e-5));
        }

    CHECK_THROWS_AS((void)resize_bicubic(flat, 0, 10), ContractError);
}

TEST_CASE("degrade_sr: ramp round trip, idempotence, preconditions") {
    const int h = 48, w = 64;
    Image ramp(h, w, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                ramp.at(y, x, c) = 0.08f + 0.007f * x + 0.005f * y + 0.02f * c;

    const Image once = degrade_sr(ramp, 4);
    double max_err = 0;
    for (int64_t i = 0; i < ramp.numel(); ++i)
        max_err = std::max(max_err, std::abs(static_cast<double>(once.data()[i]) - ramp.data()[i]));
    CHECK(max_err < 1e-3);

    // Once the image is band-limited, degrading again changes nothing.
    const Image twice = degrade_sr(once, 4);
    for (int64_t i = 0; i < ramp.numel(); ++i)
        REQUIRE(twice.data()[i] == doctest::Approx(once.data()[i]).epsilon(1e-4));

    // A checkerboard loses contrast: SR degradation must actually destroy
    // high frequencies, not just pass images through.
    Image checker(h, w, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) checker.at(y, x, 0) = ((x + y) % 2 == 0) ? 1.0f : 0.0f;
    const Image softened = degrade_sr(checker, 4);
    double lo = 1e9, hi = -1e9;
    for (int64_t i = 0; i < softened.numel(); ++i) {
        lo = std::min(lo, static_cast<double>(softened.data()[i]));
        hi = std::max(hi, static_cast<double>(softened.data()[i]));
    }
    CHECK(hi - lo < 0.5);

    CHECK_THROWS_AS((void)degrade_sr(ramp, 1), ContractError);
    CHECK_THROWS_AS((void)degrade_sr(Image(10, 12, 1), 4), ContractError);  // 10 % 4 != 0
}

TEST_CASE("degrade_viewset: determinism, per-view kernels, pass-through") {
    // Four copies of one image: any pairwise difference after degradation
    // proves the per-view kernel streams are distinct.
    const Image shared = random_image(48, 64, 3, 20);
    ViewSet vs;
    vs.scene_id = "shared";
    vs.view_indices = {0, 1, 2, 3};
    vs.images.assign(4, shared);

    DegradeTask task;
    task.kind = DegradeTask::Kind::Deblur;
    task.blur.size_mean = 9.0;
    task.blur.size_std = 2.0;
    task.blur.intensity_min = 0.1;
    task.blur.intensity_max = 0.4;

    const ViewSet out1 = degrade_viewset(vs, task, 123);
    const ViewSet out2 = degrade_viewset(vs, task, 123);
    REQUIRE(out1.n_views() == 4);
    for (int i = 0; i < 4; ++i) REQUIRE(out1.images[i] == out2.images[i]);
    CHECK(out1.scene_id == vs.scene_id);
    CHECK(out1.view_indices == vs.view_indices);
    CHECK_FALSE(out1.has_depths());

    for (int i = 0; i < 4; ++i) {
        CHECK_FALSE(out1.images[i] == shared);  // blur changed something
        for (int j = i + 1; j < 4; ++j) CHECK_FALSE(out1.images[i] == out1.images[j]);
    }

    const ViewSet other = degrade_viewset(vs, task, 124);
    CHECK_FALSE(other.images[0] == out1.images[0]);

    // A single view reproduces exactly the documented per-view sub-stream.
    ViewSet solo;
    solo.scene_id = "solo";
    solo.view_indices = {0};
    solo.images = {shared};
    const ViewSet solo_out = degrade_viewset(solo, task, 123);

    Rng rng(hash_combine(123, 0));
    const int size = sample_kernel_size(task.blur, rng);
    const double intensity = rng.uniform(task.blur.intensity_min, task.blur.intensity_max);
    const BlurKernel kernel = synth_motion_kernel(size, intensity, rng);
    CHECK(solo_out.images[0] == apply_blur(shared, kernel));

    // SR task: per-view result is exactly degrade_sr, depths/cameras kept.
    SyntheticSceneParams params;
    params.n_views = 3;
    params.seed = 2;
    const Scene scene = generate_synthetic_scene(params);
    const ViewSet posed = make_viewset(scene, {0, 2});
    DegradeTask sr;
    sr.kind = DegradeTask::Kind::SR;
    sr.sr_factor = 4;
    const ViewSet sr_out = degrade_viewset(posed, sr, 77);
    REQUIRE(sr_out.n_views() == 2);
    CHECK(sr_out.images[0] == degrade_sr(posed.images[0], 4));
    CHECK(sr_out.images[1] == degrade_sr(posed.images[1], 4));
    REQUIRE(sr_out.has_depths());
    REQUIRE(sr_out.has_cameras());
    CHECK(sr_out.depths[0] == posed.depths[0]);
    CHECK((sr_out.cameras[1].world_to_camera - posed.cameras[1].world_to_camera)
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK(sr_out.view_indices == std::vector<int>{0, 2});
}
