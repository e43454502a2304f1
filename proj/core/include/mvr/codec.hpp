#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mvr/image.hpp"
#include "mvr/tensor.hpp"

namespace mvr {

/// Maps between image space and the latent space the diffusion model works
/// in.  encode stacks N images into one [N, c, H/ds, W/ds] latent set;
/// decode inverts it back to images (clipped to [0, 1]).
class Codec {
public:
    virtual ~Codec() = default;

    virtual int latent_channels() const = 0;

    /// Spatial factor between image and latent resolution (>= 1).
    virtual int downscale() const = 0;

    virtual Tensor<float> encode(const std::vector<Image>& images) const = 0;
    virtual std::vector<Image> decode(const Tensor<float>& latents) const = 0;
};

/// Latent = pixels.  With downscale = 1 the round trip is exact; with
/// downscale = 2 encode averages 2x2 blocks (area downsample) and decode
/// upsamples bilinearly, trading fidelity for a 4x cheaper model.
class IdentityCodec final : public Codec {
public:
    explicit IdentityCodec(int downscale = 1);

    int latent_channels() const override { return 3; }
    int downscale() const override { return ds_; }

    Tensor<float> encode(const std::vector<Image>& images) const override;
    std::vector<Image> decode(const Tensor<float>& latents) const override;

private:
    int ds_ = 1;
};

/// "identity" or "identity_ds2" (the names used by training configs).
std::unique_ptr<Codec> make_codec(const std::string& name);

}  // namespace mvr
