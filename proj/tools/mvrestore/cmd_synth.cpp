#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>

#include "commands.hpp"
#include "mvr/degrade.hpp"
#include "mvr/errors.hpp"
#include "mvr/rng.hpp"
#include "mvr/scene_io.hpp"
#include "mvr/synthetic.hpp"

namespace mvr::cli {

namespace {

// Sub-stream tags so scene generation and degradation never share a seed.
constexpr uint64_t kGenStream = 0x7363656e65ull;   // scene generation
constexpr uint64_t kDegStream = 0x646567726eull;   // degradation draws

struct SynthOpts {
    std::string in_root;
    std::string out_root;
    std::string task = "deblur";
    double size_mean = 85.0;
    double size_std = 12.75;
    double intensity_min = 0.0;
    double intensity_max = 0.4;
    int factor = 4;
    uint64_t seed = 0;
    int gen_scenes = 0;
    int gen_views = 4;
    int gen_height = 48;
    int gen_width = 64;
};

void run_synth(const SynthOpts& opts) {
    DegradeTask task;
    if (opts.task == "deblur") {
        task.kind = DegradeTask::Kind::Deblur;
    } else if (opts.task == "sr") {
        task.kind = DegradeTask::Kind::SR;
    } else {
        throw ConfigError("synth: unknown task '" + opts.task + "' (expected deblur or sr)");
    }
    task.blur.size_mean = opts.size_mean;
    task.blur.size_std = opts.size_std;
    task.blur.intensity_min = opts.intensity_min;
    task.blur.intensity_max = opts.intensity_max;
    task.sr_factor = opts.factor;

    const std::filesystem::path in_root = opts.in_root;
    const std::filesystem::path out_root = opts.out_root;

    for (int s = 0; s < opts.gen_scenes; ++s) {
        SyntheticSceneParams params;
        params.n_views = opts.gen_views;
        params.height = opts.gen_height;
        params.width = opts.gen_width;
        params.seed = hash_combine(opts.seed, kGenStream, static_cast<uint64_t>(s));
        char id[32];
        std::snprintf(id, sizeof(id), "scene_%04d", s);
        params.scene_id = id;
        save_scene(generate_synthetic_scene(params), in_root);
        std::printf("generated %s (%d views, %dx%d)\n", (in_root / id).c_str(), opts.gen_views,
                    opts.gen_height, opts.gen_width);
    }

    const std::vector<std::string> ids = list_scenes(in_root);
    if (ids.empty()) throw ConfigError("synth: no scenes under " + in_root.string());

    for (size_t i = 0; i < ids.size(); ++i) {
        const Scene clean = load_scene(in_root, ids[i]);
        std::vector<int> all(static_cast<size_t>(clean.n_views()));
        for (size_t v = 0; v < all.size(); ++v) all[v] = static_cast<int>(v);
        const ViewSet degraded = degrade_viewset(
            make_viewset(clean, all), task,
            hash_combine(opts.seed, kDegStream, static_cast<uint64_t>(i)));

        Scene out;
        out.scene_id = clean.scene_id;
        out.views = clean.views;
        for (size_t v = 0; v < out.views.size(); ++v)
            out.views[v].image = degraded.images[v];
        save_scene(out, out_root);
        std::printf("degraded %s -> %s (%d views, task=%s)\n", (in_root / ids[i]).c_str(),
                    (out_root / ids[i]).c_str(), clean.n_views(), opts.task.c_str());
    }
}

}  // namespace

void register_synth(CLI::App& app) {
    auto opts = std::make_shared<SynthOpts>();
    CLI::App* sub = app.add_subcommand(
        "synth", "Degrade scenes (motion blur or x4 bicubic SR), optionally generating "
                 "synthetic clean scenes first");
    sub->add_option("--in", opts->in_root, "Clean scene root (read, or written by --gen-scenes)")
        ->required();
    sub->add_option("--out", opts->out_root, "Degraded scene root (written)")->required();
    sub->add_option("--task", opts->task, "Degradation task: deblur or sr")
        ->check(CLI::IsMember({"deblur", "sr"}))
        ->capture_default_str();
    sub->add_option("--size-mean", opts->size_mean, "Blur kernel size mean, px")
        ->capture_default_str();
    sub->add_option("--size-std", opts->size_std, "Blur kernel size std, px")
        ->capture_default_str();
    sub->add_option("--intensity-min", opts->intensity_min, "Trajectory jitter lower bound")
        ->capture_default_str();
    sub->add_option("--intensity-max", opts->intensity_max, "Trajectory jitter upper bound")
        ->capture_default_str();
    sub->add_option("--factor", opts->factor, "SR down/up factor")->capture_default_str();
    sub->add_option("--seed", opts->seed, "Root seed for all randomness")->capture_default_str();
    sub->add_option("--gen-scenes", opts->gen_scenes,
                    "Generate this many synthetic clean scenes into --in first")
        ->capture_default_str();
    sub->add_option("--gen-views", opts->gen_views, "Views per generated scene")
        ->capture_default_str();
    sub->add_option("--gen-height", opts->gen_height, "Generated image height")
        ->capture_default_str();
    sub->add_option("--gen-width", opts->gen_width, "Generated image width")
        ->capture_default_str();
    sub->callback([opts] { run_synth(*opts); });
}

}  // namespace mvr::cli
