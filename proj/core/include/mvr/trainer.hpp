#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvr/codec.hpp"
#include "mvr/degrade.hpp"
#include "mvr/mv_unet.hpp"
#include "mvr/rng.hpp"
#include "mvr/scene.hpp"
#include "mvr/tensor.hpp"

namespace mvr {

/// Adam moment decay rates and the denominator stabilizer.
struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// What the run learns to restore.  Deblur and SR degrade the condition
/// views and keep the originals as targets; Depth conditions on the clean
/// RGB views and targets their normalized depth maps instead.
struct TrainTask {
    enum class Kind { Deblur, SR, Depth };
    Kind kind = Kind::Deblur;
    BlurParams blur;    // Deblur
    int sr_factor = 4;  // SR

    bool is_depth() const { return kind == Kind::Depth; }
    /// The degradation applied to condition views (Deblur/SR only).
    DegradeTask degradation() const;
};

/// Full description of a training run.  Model architecture, noise schedule,
/// and the view-selection window ride along with the optimization settings
/// so a run is reproducible from this struct plus the scene data alone.
struct TrainConfig {
    int iterations = 2000;
    int batch_sets = 2;      // view sets per optimization step
    int views_per_set = 4;   // N
    double learning_rate = 3e-5;
    AdamParams adam;
    TrainTask task;
    uint64_t seed = 0;
    int checkpoint_every = 500;
    std::string codec = "identity";  // "identity" | "identity_ds2"

    MVUNetConfig model;
    int schedule_T = 200;
    double beta_start = 5e-4;
    double beta_end = 0.032;

    // Overlap window and list cap for precomputing per-anchor candidate
    // lists when the caller does not supply them.
    double select_lo = 0.6;
    double select_hi = 0.8;
    int select_list_size = 8;

    /// Throws ContractError on out-of-domain values.  learning_rate 0 is
    /// allowed (a well-defined no-op run); negative is not.
    void validate() const;
};

/// Depth normalization constants: the 2nd and 98th percentile of the valid
/// depth values of the scene they were fit on.
struct DepthNorm {
    double p2 = 0.0;
    double p98 = 0.0;

    /// Ranges narrower than this encode as constant 0.5 instead of dividing.
    static constexpr double kDegenerateRange = 1e-6;
    bool degenerate() const { return p98 - p2 < kDegenerateRange; }
};

/// Pools the valid (> 0) pixels of all maps and takes the 2nd/98th
/// percentile (sorted order, linear interpolation between ranks).
/// Throws ContractError when no valid pixel exists.
DepthNorm depth_norm_constants(const std::vector<DepthMap>& depths);

/// Valid depth -> clamp((d - p2) / (p98 - p2), 0, 1) replicated to 3
/// channels; invalid pixels encode to 0; a degenerate range encodes every
/// valid pixel as 0.5.
Image depth_task_encode(const DepthMap& depth, const DepthNorm& norm);

/// Inverse map p2 + gray * (p98 - p2) applied everywhere.  Validity is not
/// recoverable from the encoding (invalid and d <= p2 both encode to 0), so
/// consumers mask with the ground-truth validity they already hold.
DepthMap depth_task_decode(const Image& img, const DepthNorm& norm);

/// {0,1} mask over the latent set [N, C, h, w] marking elements allowed to
/// carry loss: a latent element survives only when every image pixel the
/// codec aggregates into it is valid (validity intersected across the
/// encode path).  Channels within a pixel share one flag.
Tensor<float> depth_loss_mask(const std::vector<DepthMap>& depths, const Codec& codec);

/// Per-anchor candidate lists for each scene, aligned one-to-one with the
/// scene vector: lists[s][a] holds the candidate view indices of scene s,
/// anchor view a.
using SceneViewLists = std::vector<std::vector<std::vector<int>>>;

/// select_view_sets over every scene with the config's overlap window.
SceneViewLists compute_view_lists(const std::vector<Scene>& scenes, const TrainConfig& cfg);

/// One training example: `clean` holds the target views (depth task: the
/// encoded depth images, original depths still attached for masking) and
/// `degraded` the condition views (depth task: the untouched RGB views).
struct TrainingSet {
    ViewSet clean;
    ViewSet degraded;
};

/// Draws one view set: uniform scene, uniform anchor, N-1 distinct
/// candidates from the anchor's list, then a uniform shuffle of all N
/// views; the condition views are degraded per-task with per-view
/// independent parameters.  Anchors with fewer than N-1 candidates are
/// skipped and redrawn; after 64 failed attempts a TrainError names the
/// requested set size.  Deterministic in the rng state.
TrainingSet sample_training_set(const std::vector<Scene>& scenes,
                                const SceneViewLists& viewsets, const TrainConfig& cfg,
                                Rng& rng);

/// Losses retained for the trailing-window statistic (and the matching
/// acceptance threshold).
inline constexpr int kLossWindow = 100;

/// Everything the optimizer owns: parameters live in the model, Adam
/// moments in visit order beside them.  Copyable; a copy is an independent
/// resume point.
struct TrainState {
    /// Fresh state: parameters drawn from hash(cfg.seed, init tag), zero
    /// moments, empty loss history.
    explicit TrainState(const TrainConfig& cfg);
    /// Uninitialized-moments variant used when loading from an archive.
    TrainState(const MVUNetConfig& model_config, uint64_t init_seed);

    int64_t step = 0;  // completed optimization steps
    MVUNet<float> model;
    std::vector<Tensor<float>> adam_m, adam_v;  // aligned with visit order
    std::vector<double> loss_window;            // last <= kLossWindow losses
};

/// One Adam update from the gradients currently accumulated in the model,
/// each divided by grad_scale (the number of sets summed into them), with
/// bias correction for 1-based step t.  Arithmetic in double, storage in
/// float.  lr 0 leaves parameters bit-identical.
void adam_step(MVUNet<float>& model, std::vector<Tensor<float>>& m,
               std::vector<Tensor<float>>& v, int64_t t, double lr, double grad_scale,
               const AdamParams& params);

/// Serializes step, model parameters, Adam moments, and the loss window.
/// A state loaded back compares bit-identical, so interrupted and
/// uninterrupted runs are indistinguishable.  (`state` is only read; the
/// reference is non-const because parameter visiting is.)
void save_train_state(const std::filesystem::path& path, TrainState& state);
TrainState load_train_state(const std::filesystem::path& path);

/// Runs cfg.iterations optimization steps (from `resume`'s step when given)
/// over batches of sampled view sets, writing loss.csv rows (step, loss, k)
/// every step and checkpoints/step_%07d.ckpt every checkpoint_every steps
/// plus at the end, all under out_dir.  Step s draws every sample from
/// Rng(hash(cfg.seed, step tag, s)), so a resumed run bit-matches an
/// uninterrupted one.  `viewsets` defaults to compute_view_lists(scenes,
/// cfg).  A non-finite loss aborts with a TrainError naming the step, the
/// timestep k, and the offending set.
TrainState train(const std::vector<Scene>& scenes, const TrainConfig& cfg,
                 const std::filesystem::path& out_dir,
                 const SceneViewLists* viewsets = nullptr,
                 const TrainState* resume = nullptr);

}  // namespace mvr
