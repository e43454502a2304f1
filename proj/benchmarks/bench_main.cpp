#include <benchmark/benchmark.h>

#include "mvr/degrade.hpp"
#include "mvr/geometry.hpp"
#include "mvr/rng.hpp"
#include "mvr/synthetic.hpp"

namespace {

mvr::Image random_image(int h, int w, uint64_t seed) {
    mvr::Rng rng(seed);
    mvr::Image im(h, w, 3);
    for (int64_t i = 0; i < im.numel(); ++i)
        im.data()[i] = static_cast<float>(rng.uniform());
    return im;
}

void bm_synthetic_scene(benchmark::State& state) {
    mvr::SyntheticSceneParams params;
    params.n_views = 4;
    for (auto _ : state) {
        params.seed++;
        benchmark::DoNotOptimize(mvr::generate_synthetic_scene(params));
    }
}
BENCHMARK(bm_synthetic_scene)->Unit(benchmark::kMillisecond);

void bm_motion_blur(benchmark::State& state) {
    const mvr::Image im = random_image(48, 64, 1);
    mvr::Rng rng(2);
    const mvr::BlurKernel kernel = mvr::synth_motion_kernel(11, 0.3, rng);
    for (auto _ : state) benchmark::DoNotOptimize(mvr::apply_blur(im, kernel));
}
BENCHMARK(bm_motion_blur)->Unit(benchmark::kMicrosecond);

void bm_bicubic_sr(benchmark::State& state) {
    const mvr::Image im = random_image(48, 64, 3);
    for (auto _ : state) benchmark::DoNotOptimize(mvr::degrade_sr(im, 4));
}
BENCHMARK(bm_bicubic_sr)->Unit(benchmark::kMicrosecond);

void bm_overlap_ratio(benchmark::State& state) {
    mvr::SyntheticSceneParams params;
    params.n_views = 2;
    const mvr::Scene scene = mvr::generate_synthetic_scene(params);
    for (auto _ : state)
        benchmark::DoNotOptimize(mvr::overlap_ratio(scene.views[0].depth, scene.views[0].camera,
                                                    scene.views[1].depth,
                                                    scene.views[1].camera));
}
BENCHMARK(bm_overlap_ratio)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
