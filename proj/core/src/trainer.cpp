#include "mvr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <utility>

#include <json.hpp>

#include "mvr/checkpoint.hpp"
#include "mvr/diffusion.hpp"
#include "mvr/errors.hpp"
#include "mvr/geometry.hpp"

namespace mvr {

namespace {

constexpr uint64_t kInitTag = 0x696e6974;  // parameter-init stream
constexpr uint64_t kStepTag = 0x73746570;  // per-step sampling stream
constexpr int kMaxSampleRetries = 64;

/// Linear-interpolation percentile of an ascending-sorted vector.
double percentile(const std::vector<float>& sorted, double q) {
    const double rank = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<size_t>(rank);
    const double frac = rank - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return static_cast<double>(sorted[lo]) +
           frac * (static_cast<double>(sorted[lo + 1]) - static_cast<double>(sorted[lo]));
}

std::vector<Tensor<float>> zero_moments(MVUNet<float>& model) {
    std::vector<Tensor<float>> moments;
    model.visit_params(
        [&](Param<float>& p) { moments.push_back(Tensor<float>::zeros(p.value.shape())); });
    return moments;
}

const MVUNetConfig& validated_model(const TrainConfig& cfg) {
    cfg.validate();
    return cfg.model;
}

std::string describe_set(const ViewSet& vs) {
    std::string s = "scene=" + vs.scene_id + ", views=[";
    for (size_t i = 0; i < vs.view_indices.size(); ++i) {
        if (i > 0) s += ' ';
        s += std::to_string(vs.view_indices[i]);
    }
    return s + ']';
}

std::string format_loss_row(int64_t step, double loss, int k) {
    char row[80];
    std::snprintf(row, sizeof row, "%lld,%.17g,%d\n", static_cast<long long>(step), loss, k);
    return row;
}

}  // namespace

DegradeTask TrainTask::degradation() const {
    DegradeTask t;
    switch (kind) {
        case Kind::Deblur:
            t.kind = DegradeTask::Kind::Deblur;
            break;
        case Kind::SR:
            t.kind = DegradeTask::Kind::SR;
            break;
        case Kind::Depth:
            throw ContractError("TrainTask: the depth task has no degradation");
    }
    t.blur = blur;
    t.sr_factor = sr_factor;
    return t;
}

void TrainConfig::validate() const {
    if (iterations < 1) throw ContractError("TrainConfig: iterations must be >= 1");
    if (batch_sets < 1) throw ContractError("TrainConfig: batch_sets must be >= 1");
    if (views_per_set < 1) throw ContractError("TrainConfig: views_per_set must be >= 1");
    if (!std::isfinite(learning_rate) || learning_rate < 0.0)
        throw ContractError("TrainConfig: learning_rate must be finite and >= 0");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
        throw ContractError("TrainConfig: adam betas must lie in [0, 1)");
    if (!(adam.eps > 0.0)) throw ContractError("TrainConfig: adam eps must be positive");
    if (task.kind == TrainTask::Kind::SR && task.sr_factor < 1)
        throw ContractError("TrainConfig: sr_factor must be >= 1");
    if (checkpoint_every < 1) throw ContractError("TrainConfig: checkpoint_every must be >= 1");
    if (schedule_T < 1) throw ContractError("TrainConfig: schedule_T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ContractError("TrainConfig: betas must satisfy 0 < beta_start <= beta_end < 1");
    if (!(select_lo >= 0.0 && select_lo <= select_hi && select_hi <= 1.0))
        throw ContractError("TrainConfig: selection window must satisfy 0 <= lo <= hi <= 1");
    if (select_list_size < 1) throw ContractError("TrainConfig: select_list_size must be >= 1");

    model.validate();
    const std::unique_ptr<Codec> c = make_codec(codec);  // rejects unknown names
    if (model.in_channels != c->latent_channels() || model.cond_channels != c->latent_channels())
        throw ContractError("TrainConfig: model in/cond channels must equal the codec's " +
                            std::to_string(c->latent_channels()) + " latent channels");
}

DepthNorm depth_norm_constants(const std::vector<DepthMap>& depths) {
    std::vector<float> valid;
    for (const DepthMap& d : depths)
        for (int64_t i = 0; i < static_cast<int64_t>(d.height()) * d.width(); ++i)
            if (d.data()[i] > 0.0f) valid.push_back(d.data()[i]);
    if (valid.empty()) throw ContractError("depth_norm_constants: no valid depth values");
    std::sort(valid.begin(), valid.end());
    return {percentile(valid, 0.02), percentile(valid, 0.98)};
}

Image depth_task_encode(const DepthMap& depth, const DepthNorm& norm) {
    if (depth.empty()) throw ContractError("depth_task_encode: empty depth map");
    Image out(depth.height(), depth.width(), 3);  // invalid pixels stay 0
    const bool flat = norm.degenerate();
    const double range = norm.p98 - norm.p2;
    for (int y = 0; y < depth.height(); ++y)
        for (int x = 0; x < depth.width(); ++x) {
            if (!depth.valid(y, x)) continue;
            const double t =
                flat ? 0.5
                     : std::clamp((static_cast<double>(depth.at(y, x)) - norm.p2) / range, 0.0, 1.0);
            const float v = static_cast<float>(t);
            out.at(y, x, 0) = v;
            out.at(y, x, 1) = v;
            out.at(y, x, 2) = v;
        }
    return out;
}

DepthMap depth_task_decode(const Image& img, const DepthNorm& norm) {
    if (img.empty()) throw ContractError("depth_task_decode: empty image");
    DepthMap out(img.height(), img.width());
    const double range = norm.p98 - norm.p2;
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            out.at(y, x) = static_cast<float>(norm.p2 + static_cast<double>(img.gray_at(y, x)) * range);
    return out;
}

Tensor<float> depth_loss_mask(const std::vector<DepthMap>& depths, const Codec& codec) {
    if (depths.empty()) throw ContractError("depth_loss_mask: no views");
    const int h = depths[0].height(), w = depths[0].width();
    const int ds = codec.downscale();
    if (h % ds != 0 || w % ds != 0)
        throw ContractError("depth_loss_mask: resolution not divisible by codec downscale");
    for (const DepthMap& d : depths)
        if (d.height() != h || d.width() != w)
            throw ContractError("depth_loss_mask: mixed depth resolutions");

    const int n = static_cast<int>(depths.size());
    const int c = codec.latent_channels();
    Tensor<float> mask({n, c, h / ds, w / ds});
    for (int v = 0; v < n; ++v)
        for (int ly = 0; ly < h / ds; ++ly)
            for (int lx = 0; lx < w / ds; ++lx) {
                bool all_valid = true;
                for (int dy = 0; dy < ds && all_valid; ++dy)
                    for (int dx = 0; dx < ds && all_valid; ++dx)
                        all_valid = depths[static_cast<size_t>(v)].valid(ly * ds + dy, lx * ds + dx);
                if (!all_valid) continue;
                for (int ch = 0; ch < c; ++ch) mask.at(v, ch, ly, lx) = 1.0f;
            }
    return mask;
}

SceneViewLists compute_view_lists(const std::vector<Scene>& scenes, const TrainConfig& cfg) {
    SceneViewLists lists;
    lists.reserve(scenes.size());
    for (const Scene& scene : scenes) {
        // A single-view scene has no pairs to rank; it still supports N=1
        // sampling, so give its one anchor an empty candidate list.
        if (scene.n_views() < 2)
            lists.emplace_back(static_cast<size_t>(scene.n_views()));
        else
            lists.push_back(select_view_sets(scene, cfg.select_lo, cfg.select_hi,
                                             cfg.select_list_size));
    }
    return lists;
}

TrainingSet sample_training_set(const std::vector<Scene>& scenes,
                                const SceneViewLists& viewsets, const TrainConfig& cfg,
                                Rng& rng) {
    if (scenes.empty()) throw ContractError("sample_training_set: no scenes");
    if (viewsets.size() != scenes.size())
        throw ContractError("sample_training_set: viewsets not aligned with scenes");
    for (size_t s = 0; s < scenes.size(); ++s)
        if (static_cast<int>(viewsets[s].size()) != scenes[s].n_views())
            throw ContractError("sample_training_set: candidate lists not aligned with views of " +
                                scenes[s].scene_id);

    const int n = cfg.views_per_set;
    for (int attempt = 0; attempt < kMaxSampleRetries; ++attempt) {
        const auto si =
            static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(scenes.size())));
        const Scene& scene = scenes[si];
        if (scene.n_views() == 0) continue;
        const int anchor = static_cast<int>(rng.uniform_int(scene.n_views()));
        const std::vector<int>& candidates = viewsets[si][static_cast<size_t>(anchor)];
        if (static_cast<int>(candidates.size()) < n - 1) continue;

        // Anchor plus n-1 distinct candidates (partial Fisher-Yates), then a
        // uniform shuffle so the anchor is equally likely at every position.
        std::vector<int> ids{anchor};
        std::vector<int> pool = candidates;
        for (int i = 0; i < n - 1; ++i) {
            const auto j =
                i + static_cast<int>(rng.uniform_int(static_cast<int64_t>(pool.size()) - i));
            std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
            ids.push_back(pool[static_cast<size_t>(i)]);
        }
        for (int i = n - 1; i > 0; --i) {
            const auto j = static_cast<int>(rng.uniform_int(i + 1));
            std::swap(ids[static_cast<size_t>(i)], ids[static_cast<size_t>(j)]);
        }

        TrainingSet set;
        set.clean = make_viewset(scene, ids);
        if (cfg.task.is_depth()) {
            // Condition on the untouched RGB views; the targets are the
            // scene-normalized depth encodings.
            std::vector<DepthMap> scene_depths;
            scene_depths.reserve(static_cast<size_t>(scene.n_views()));
            for (const View& view : scene.views) scene_depths.push_back(view.depth);
            const DepthNorm norm = depth_norm_constants(scene_depths);
            set.degraded = set.clean;
            for (int i = 0; i < n; ++i)
                set.clean.images[static_cast<size_t>(i)] =
                    depth_task_encode(set.clean.depths[static_cast<size_t>(i)], norm);
        } else {
            set.degraded = degrade_viewset(set.clean, cfg.task.degradation(), rng.next_u64());
        }
        return set;
    }
    throw TrainError("sample_training_set: no anchor offered " + std::to_string(n - 1) +
                     " candidates in " + std::to_string(kMaxSampleRetries) + " attempts");
}

TrainState::TrainState(const MVUNetConfig& model_config, uint64_t init_seed)
    : model(model_config, init_seed) {
    adam_m = zero_moments(model);
    adam_v = zero_moments(model);
}

TrainState::TrainState(const TrainConfig& cfg)
    : TrainState(validated_model(cfg), hash_combine(cfg.seed, kInitTag)) {}

void adam_step(MVUNet<float>& model, std::vector<Tensor<float>>& m,
               std::vector<Tensor<float>>& v, int64_t t, double lr, double grad_scale,
               const AdamParams& params) {
    if (t < 1) throw ContractError("adam_step: t is 1-based");
    if (!(grad_scale > 0.0)) throw ContractError("adam_step: grad_scale must be positive");
    const double bc1 = 1.0 - std::pow(params.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(params.beta2, static_cast<double>(t));

    size_t i = 0;
    model.visit_params([&](Param<float>& p) {
        if (i >= m.size() || i >= v.size() || !m[i].same_shape(p.value) ||
            !v[i].same_shape(p.value))
            throw ContractError("adam_step: moments misaligned at parameter " + p.name);
        Tensor<float>& mi = m[i];
        Tensor<float>& vi = v[i];
        for (int64_t e = 0; e < p.value.numel(); ++e) {
            const double g = static_cast<double>(p.grad[e]) / grad_scale;
            const double mn = params.beta1 * static_cast<double>(mi[e]) + (1.0 - params.beta1) * g;
            const double vn =
                params.beta2 * static_cast<double>(vi[e]) + (1.0 - params.beta2) * g * g;
            mi[e] = static_cast<float>(mn);
            vi[e] = static_cast<float>(vn);
            const double update = lr * (mn / bc1) / (std::sqrt(vn / bc2) + params.eps);
            p.value[e] = static_cast<float>(static_cast<double>(p.value[e]) - update);
        }
        ++i;
    });
    if (i != m.size() || i != v.size())
        throw ContractError("adam_step: moment count differs from parameter count");
}

void save_train_state(const std::filesystem::path& path, TrainState& state) {
    TensorArchive archive;
    nlohmann::json meta;
    meta["step"] = state.step;
    meta["model"] = nlohmann::json::parse(config_to_json(state.model.config()));
    meta["loss_window"] = state.loss_window;
    archive.meta_json = meta.dump();

    store_params(state.model, archive);
    size_t i = 0;
    state.model.visit_params([&](Param<float>& p) {
        if (i >= state.adam_m.size() || i >= state.adam_v.size())
            throw ContractError("save_train_state: moments misaligned at parameter " + p.name);
        archive.add("adam.m." + p.name, state.adam_m[i]);
        archive.add("adam.v." + p.name, state.adam_v[i]);
        ++i;
    });
    save_archive(path, archive);
}

TrainState load_train_state(const std::filesystem::path& path) {
    const TensorArchive archive = load_archive(path);

    int64_t step = 0;
    std::string model_json;
    std::vector<double> loss_window;
    try {
        const nlohmann::json meta = nlohmann::json::parse(archive.meta_json);
        step = meta.at("step").get<int64_t>();
        model_json = meta.at("model").dump();
        loss_window = meta.at("loss_window").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint: bad metadata in " + path.string() + ": " + e.what());
    }
    if (step < 0) throw IoError("checkpoint: negative step in " + path.string());

    // The stored parameters overwrite the seed-0 initialization entirely.
    TrainState state(config_from_json(model_json), 0);
    state.step = step;
    state.loss_window = std::move(loss_window);
    load_params(state.model, archive);
    size_t i = 0;
    state.model.visit_params([&](Param<float>& p) {
        const Tensor<float>* m = archive.find("adam.m." + p.name);
        const Tensor<float>* v = archive.find("adam.v." + p.name);
        if (m == nullptr || v == nullptr)
            throw IoError("checkpoint: missing optimizer moments for " + p.name);
        if (!m->same_shape(p.value) || !v->same_shape(p.value))
            throw IoError("checkpoint: moment shape mismatch for " + p.name);
        state.adam_m[i] = *m;
        state.adam_v[i] = *v;
        ++i;
    });
    return state;
}

TrainState train(const std::vector<Scene>& scenes, const TrainConfig& cfg,
                 const std::filesystem::path& out_dir, const SceneViewLists* viewsets,
                 const TrainState* resume) {
    cfg.validate();
    if (scenes.empty()) throw ContractError("train: no scenes");
    for (const Scene& scene : scenes) scene.validate("train");

    SceneViewLists computed;
    if (viewsets == nullptr) {
        computed = compute_view_lists(scenes, cfg);
        viewsets = &computed;
    }

    TrainState state = resume != nullptr ? *resume : TrainState(cfg);
    if (resume != nullptr) {
        if (config_to_json(state.model.config()) != config_to_json(cfg.model))
            throw ContractError("train: resume state architecture differs from the config");
        if (state.step > static_cast<int64_t>(cfg.iterations))
            throw ContractError("train: resume state is past cfg.iterations");
    }

    const NoiseSchedule sched = make_schedule(cfg.schedule_T, cfg.beta_start, cfg.beta_end);
    const std::unique_ptr<Codec> codec = make_codec(cfg.codec);

    std::filesystem::create_directories(out_dir / "checkpoints");
    const std::filesystem::path csv_path = out_dir / "loss.csv";
    std::ofstream csv(csv_path, resume != nullptr ? std::ios::app : std::ios::trunc);
    if (!csv) throw IoError("train: cannot open " + csv_path.string());
    if (resume == nullptr) csv << "step,loss,k\n";

    for (int64_t s = state.step; s < cfg.iterations; ++s) {
        // Everything stochastic in this step comes from one per-step stream,
        // so a resumed run replays the identical sample sequence.
        Rng rng(hash_combine(cfg.seed, kStepTag, static_cast<uint64_t>(s)));
        state.model.zero_grad();

        double loss_sum = 0.0;
        int first_k = 0;
        for (int b = 0; b < cfg.batch_sets; ++b) {
            const TrainingSet set = sample_training_set(scenes, *viewsets, cfg, rng);
            const Tensor<float> x0 = codec->encode(set.clean.images);
            const Tensor<float> cond = codec->encode(set.degraded.images);
            TrainingLoss<float> result;
            if (cfg.task.is_depth()) {
                const Tensor<float> mask = depth_loss_mask(set.clean.depths, *codec);
                result = training_loss(state.model, x0, cond, sched, rng, true, &mask);
            } else {
                result = training_loss(state.model, x0, cond, sched, rng, true);
            }
            if (!std::isfinite(result.loss))
                throw TrainError("train: non-finite loss at step " + std::to_string(s) +
                                 " (k=" + std::to_string(result.k) + ", " +
                                 describe_set(set.clean) + ")");
            if (b == 0) first_k = result.k;
            loss_sum += result.loss;
        }
        const double loss = loss_sum / cfg.batch_sets;

        adam_step(state.model, state.adam_m, state.adam_v, s + 1, cfg.learning_rate,
                  static_cast<double>(cfg.batch_sets), cfg.adam);
        state.step = s + 1;
        if (static_cast<int>(state.loss_window.size()) == kLossWindow)
            state.loss_window.erase(state.loss_window.begin());
        state.loss_window.push_back(loss);

        csv << format_loss_row(s, loss, first_k) << std::flush;
        if (!csv) throw IoError("train: write failed: " + csv_path.string());

        if (state.step % cfg.checkpoint_every == 0 || state.step == cfg.iterations) {
            char name[32];
            std::snprintf(name, sizeof name, "step_%07lld.ckpt",
                          static_cast<long long>(state.step));
            save_train_state(out_dir / "checkpoints" / name, state);
        }
    }
    return state;
}

}  // namespace mvr
