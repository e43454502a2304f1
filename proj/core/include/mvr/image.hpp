#pragma once

#include <cstdint>
#include <vector>

#include "mvr/errors.hpp"

namespace mvr {

/// Row-major, channel-last float image with values in [0, 1].
/// channels is 1 (gray) or 3 (RGB).
class Image {
public:
    Image() = default;

    Image(int height, int width, int channels) : h_(height), w_(width), c_(channels) {
        if (height <= 0 || width <= 0 || (channels != 1 && channels != 3))
            throw ContractError("Image: bad dimensions");
        px_.assign(static_cast<size_t>(h_) * w_ * c_, 0.0f);
    }

    static Image constant(int height, int width, int channels, float value) {
        Image im(height, width, channels);
        std::fill(im.px_.begin(), im.px_.end(), value);
        return im;
    }

    int height() const { return h_; }
    int width() const { return w_; }
    int channels() const { return c_; }
    bool empty() const { return px_.empty(); }
    int64_t numel() const { return static_cast<int64_t>(px_.size()); }

    float& at(int y, int x, int c) { return px_[(static_cast<size_t>(y) * w_ + x) * c_ + c]; }
    const float& at(int y, int x, int c) const {
        return px_[(static_cast<size_t>(y) * w_ + x) * c_ + c];
    }

    float* data() { return px_.data(); }
    const float* data() const { return px_.data(); }

    bool same_shape(const Image& o) const { return h_ == o.h_ && w_ == o.w_ && c_ == o.c_; }

    /// Channel mean at one pixel — the grayscale used by corner detection
    /// and other single-channel consumers.
    float gray_at(int y, int x) const {
        if (c_ == 1) return at(y, x, 0);
        return (at(y, x, 0) + at(y, x, 1) + at(y, x, 2)) / 3.0f;
    }

    void clip01() {
        for (float& v : px_) v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    }

    bool operator==(const Image& o) const {
        return h_ == o.h_ && w_ == o.w_ && c_ == o.c_ && px_ == o.px_;
    }

private:
    int h_ = 0, w_ = 0, c_ = 0;
    std::vector<float> px_;
};

/// Per-pixel depth in meters.  Validity is carried by the data itself:
/// 0 marks an invalid pixel (the on-disk format uses the same marker), and
/// every consumer in the library skips those entries.
class DepthMap {
public:
    DepthMap() = default;

    DepthMap(int height, int width) : h_(height), w_(width) {
        if (height <= 0 || width <= 0) throw ContractError("DepthMap: bad dimensions");
        d_.assign(static_cast<size_t>(h_) * w_, 0.0f);
    }

    int height() const { return h_; }
    int width() const { return w_; }
    bool empty() const { return d_.empty(); }

    float& at(int y, int x) { return d_[static_cast<size_t>(y) * w_ + x]; }
    const float& at(int y, int x) const { return d_[static_cast<size_t>(y) * w_ + x]; }

    bool valid(int y, int x) const { return at(y, x) > 0.0f; }

    float* data() { return d_.data(); }
    const float* data() const { return d_.data(); }

    int64_t count_valid() const {
        int64_t n = 0;
        for (float v : d_)
            if (v > 0.0f) ++n;
        return n;
    }

    bool operator==(const DepthMap& o) const { return h_ == o.h_ && w_ == o.w_ && d_ == o.d_; }

private:
    int h_ = 0, w_ = 0;
    std::vector<float> d_;
};

}  // namespace mvr
