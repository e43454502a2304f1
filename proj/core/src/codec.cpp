#include "mvr/codec.hpp"

#include "mvr/errors.hpp"

namespace mvr {

IdentityCodec::IdentityCodec(int downscale) : ds_(downscale) {
    if (downscale != 1 && downscale != 2)
        throw ContractError("IdentityCodec: downscale must be 1 or 2");
}

Tensor<float> IdentityCodec::encode(const std::vector<Image>& images) const {
    if (images.empty()) throw ContractError("codec encode: empty image list");
    const int h = images[0].height(), w = images[0].width();
    if (h % ds_ != 0 || w % ds_ != 0)
        throw ContractError("codec encode: image size not divisible by downscale");
    const int lh = h / ds_, lw = w / ds_;

    Tensor<float> out({static_cast<int>(images.size()), 3, lh, lw});
    for (size_t n = 0; n < images.size(); ++n) {
        const Image& im = images[n];
        if (im.height() != h || im.width() != w)
            throw ContractError("codec encode: images differ in size");
        if (im.channels() != 3) throw ContractError("codec encode: expected RGB images");
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < lh; ++y)
                for (int x = 0; x < lw; ++x) {
                    float acc = 0.0f;
                    for (int dy = 0; dy < ds_; ++dy)
                        for (int dx = 0; dx < ds_; ++dx)
                            acc += im.at(y * ds_ + dy, x * ds_ + dx, c);
                    out.at(static_cast<int>(n), c, y, x) =
                        acc / static_cast<float>(ds_ * ds_);
                }
    }
    return out;
}

std::vector<Image> IdentityCodec::decode(const Tensor<float>& latents) const {
    if (latents.ndim() != 4 || latents.dim(1) != 3)
        throw ContractError("codec decode: latents must be [N, 3, h, w]");
    const int n_views = static_cast<int>(latents.dim(0));
    const int lh = static_cast<int>(latents.dim(2)), lw = static_cast<int>(latents.dim(3));

    std::vector<Image> out;
    out.reserve(static_cast<size_t>(n_views));
    for (int n = 0; n < n_views; ++n) {
        Image im(lh * ds_, lw * ds_, 3);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < im.height(); ++y)
                for (int x = 0; x < im.width(); ++x) {
                    float v;
                    if (ds_ == 1) {
                        v = latents.at(n, c, y, x);
                    } else {
                        // Bilinear with half-pixel alignment: sample the
                        // latent grid at the image pixel's center.
                        const float sy = (y + 0.5f) / ds_ - 0.5f;
                        const float sx = (x + 0.5f) / ds_ - 0.5f;
                        const int y0 = std::max(0, std::min(lh - 1, static_cast<int>(std::floor(sy))));
                        const int x0 = std::max(0, std::min(lw - 1, static_cast<int>(std::floor(sx))));
                        const int y1 = std::min(lh - 1, y0 + 1);
                        const int x1 = std::min(lw - 1, x0 + 1);
                        const float fy = std::max(0.0f, std::min(1.0f, sy - y0));
                        const float fx = std::max(0.0f, std::min(1.0f, sx - x0));
                        v = (1 - fy) * ((1 - fx) * latents.at(n, c, y0, x0) +
                                        fx * latents.at(n, c, y0, x1)) +
                            fy * ((1 - fx) * latents.at(n, c, y1, x0) +
                                  fx * latents.at(n, c, y1, x1));
                    }
                    im.at(y, x, c) = v;
                }
        im.clip01();
        out.push_back(std::move(im));
    }
    return out;
}

std::unique_ptr<Codec> make_codec(const std::string& name) {
    if (name == "identity") return std::make_unique<IdentityCodec>(1);
    if (name == "identity_ds2") return std::make_unique<IdentityCodec>(2);
    throw ConfigError("unknown codec: " + name);
}

}  // namespace mvr
