#include "mvr/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

#include "mvr/errors.hpp"

namespace mvr {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::filesystem::path& path, const char* what) {
    throw IoError(std::string(what) + ": " + path.string());
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) fail(path, "cannot open PNG");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(path, "libpng init failed");
    }
    std::vector<std::vector<png_byte>> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "malformed PNG");
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);

    if (color & PNG_COLOR_MASK_ALPHA) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "PNG with alpha channel not supported");
    }
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "PNG must be gray or RGB");
    }

    rows.assign(h, std::vector<png_byte>(png_get_rowbytes(png, info)));
    std::vector<png_bytep> row_ptrs(h);
    for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = rows[y].data();
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image out(static_cast<int>(h), static_cast<int>(w), channels);
    for (png_uint_32 y = 0; y < h; ++y)
        for (png_uint_32 x = 0; x < w * static_cast<png_uint_32>(channels); ++x)
            out.data()[static_cast<size_t>(y) * w * channels + x] =
                static_cast<float>(rows[y][x]) / 255.0f;
    return out;
}

void write_png(const Image& image, const std::filesystem::path& path) {
    if (image.empty()) throw ContractError("write_png: empty image");
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) fail(path, "cannot open PNG for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(path, "libpng init failed");
    }
    std::vector<std::vector<png_byte>> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "PNG write failed");
    }

    png_init_io(png, fp.get());
    const int color = image.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()),
                 static_cast<png_uint_32>(image.height()), 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const int rowlen = image.width() * image.channels();
    rows.assign(static_cast<size_t>(image.height()), std::vector<png_byte>(rowlen));
    std::vector<png_bytep> row_ptrs(static_cast<size_t>(image.height()));
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < rowlen; ++x)
            rows[static_cast<size_t>(y)][static_cast<size_t>(x)] =
                quantize8(image.data()[static_cast<size_t>(y) * rowlen + x]);
        row_ptrs[static_cast<size_t>(y)] = rows[static_cast<size_t>(y)].data();
    }
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);

    if (std::fflush(fp.get()) != 0) fail(path, "PNG flush failed");
}

void snap_to_8bit(Image& image) {
    for (int64_t i = 0; i < image.numel(); ++i)
        image.data()[i] = static_cast<float>(quantize8(image.data()[i])) / 255.0f;
}

}  // namespace mvr
