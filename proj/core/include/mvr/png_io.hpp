#pragma once

#include <filesystem>

#include "mvr/image.hpp"

namespace mvr {

/// Reads an 8-bit gray or RGB PNG into a float image in [0,1].
/// 16-bit files are reduced to 8 bits; palette images expand to RGB;
/// an alpha channel is an error (the pipeline never produces one).
Image read_png(const std::filesystem::path& path);

/// Writes an Image as an 8-bit PNG (gray for 1 channel, RGB for 3),
/// quantizing with round-half-up.
void write_png(const Image& image, const std::filesystem::path& path);

/// The quantization used on save: round-half-up to the 8-bit grid.
inline uint8_t quantize8(float v) {
    float q = v * 255.0f + 0.5f;
    if (q < 0.0f) q = 0.0f;
    if (q > 255.0f) q = 255.0f;
    return static_cast<uint8_t>(q);
}

/// Snaps all pixel values onto the 8-bit grid (what a save/load round trip
/// would do).  The synthetic generator applies this so generated scenes
/// survive PNG round trips bit-exactly.
void snap_to_8bit(Image& image);

}  // namespace mvr
