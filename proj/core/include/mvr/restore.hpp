#pragma once

#include <vector>

#include "mvr/codec.hpp"
#include "mvr/diffusion.hpp"

namespace mvr {

/// End-to-end inference on one degraded view set: encode, run the reverse
/// process conditioned on the degraded latents, decode, clip to [0, 1].
/// The view count is whatever the input provides — the model is shared
/// across views, so it need not match the training-time set size.
/// Deterministic in (model parameters, input, spec.seed).
template <typename Model>
std::vector<Image> restore(Model& model, const Codec& codec,
                           const std::vector<Image>& degraded, const SamplerSpec& spec,
                           const NoiseSchedule& sched) {
    if (degraded.empty()) throw ContractError("restore: empty view set");
    const Tensor<float> cond = codec.encode(degraded);
    const Tensor<float> latents =
        sample(model, cond, spec, sched, codec.latent_channels());
    return codec.decode(latents);  // decode clips to [0, 1]
}

}  // namespace mvr
