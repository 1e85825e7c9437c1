#include "xbias/core/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "xbias/core/error.hpp"

namespace xbias {

std::size_t Mask::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw Error("cannot open " + path.string());
    return f;
}

void write_png_raw(const std::filesystem::path& path, int width, int height, int color_type,
                   int bit_depth, const std::uint8_t* data, std::size_t row_bytes) {
    auto file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("failed writing PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
        png_write_row(png, const_cast<png_bytep>(data + static_cast<std::size_t>(y) * row_bytes));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct RawPng {
    int width = 0;
    int height = 0;
    int channels = 0;
    int bit_depth = 8;
    std::vector<std::uint8_t> data;
};

RawPng read_png_raw(const std::filesystem::path& path, bool keep16) {
    auto file = open_file(path, "rb");
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw Error("not a PNG file: " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("failed reading PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (depth == 16) {
        if (keep16) png_set_swap(png); // host order (little endian)
        else png_set_strip_16(png);
    }
    png_read_update_info(png, info);

    RawPng out;
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    out.data.resize(row_bytes * out.height);
    std::vector<png_bytep> rows(out.height);
    for (int y = 0; y < out.height; ++y) rows[y] = out.data.data() + y * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

} // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
    int type = 0;
    switch (image.channels) {
    case 1: type = PNG_COLOR_TYPE_GRAY; break;
    case 3: type = PNG_COLOR_TYPE_RGB; break;
    case 4: type = PNG_COLOR_TYPE_RGBA; break;
    default: throw Error("unsupported channel count for PNG");
    }
    write_png_raw(path, image.width, image.height, type, 8, image.pixels.data(),
                  static_cast<std::size_t>(image.width) * image.channels);
}

Image read_png(const std::filesystem::path& path, int want_channels) {
    if (want_channels != 1 && want_channels != 3) throw Error("want_channels must be 1 or 3");
    RawPng raw = read_png_raw(path, false);
    Image img(raw.width, raw.height, want_channels);
    const bool has_alpha = raw.channels == 2 || raw.channels == 4;
    const int color_channels = has_alpha ? raw.channels - 1 : raw.channels;
    for (int y = 0; y < raw.height; ++y) {
        for (int x = 0; x < raw.width; ++x) {
            const std::uint8_t* px =
                raw.data.data() + (static_cast<std::size_t>(y) * raw.width + x) * raw.channels;
            if (want_channels == 3) {
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = px[color_channels == 1 ? 0 : c];
            } else if (color_channels == 1) {
                img.at(x, y, 0) = px[0];
            } else {
                const int lum = (299 * px[0] + 587 * px[1] + 114 * px[2] + 500) / 1000;
                img.at(x, y, 0) = static_cast<std::uint8_t>(lum);
            }
        }
    }
    return img;
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
    std::vector<std::uint8_t> data(mask.bits.size());
    std::transform(mask.bits.begin(), mask.bits.end(), data.begin(),
                   [](std::uint8_t b) { return b ? std::uint8_t{255} : std::uint8_t{0}; });
    write_png_raw(path, mask.width, mask.height, PNG_COLOR_TYPE_GRAY, 8, data.data(),
                  static_cast<std::size_t>(mask.width));
}

Mask read_mask_png(const std::filesystem::path& path) {
    Image gray = read_png(path, 1);
    Mask m(gray.width, gray.height);
    for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = gray.pixels[i] >= 128 ? 1 : 0;
    return m;
}

void write_unit_map_png16(const std::filesystem::path& path, int width, int height,
                          std::span<const double> values) {
    if (values.size() != static_cast<std::size_t>(width) * height) {
        throw Error("map size does not match dimensions");
    }
    std::vector<std::uint8_t> data(values.size() * 2);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = std::clamp(values[i], 0.0, 1.0);
        const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
        data[2 * i] = static_cast<std::uint8_t>(q >> 8); // PNG is big endian
        data[2 * i + 1] = static_cast<std::uint8_t>(q & 0xff);
    }
    write_png_raw(path, width, height, PNG_COLOR_TYPE_GRAY, 16, data.data(),
                  static_cast<std::size_t>(width) * 2);
}

std::vector<double> read_unit_map_png16(const std::filesystem::path& path, int& width, int& height) {
    RawPng raw = read_png_raw(path, true);
    if (raw.channels != 1 || raw.bit_depth != 16) throw Error("expected 16-bit gray PNG");
    width = raw.width;
    height = raw.height;
    std::vector<double> out(static_cast<std::size_t>(width) * height);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::uint16_t q = static_cast<std::uint16_t>(raw.data[2 * i] | (raw.data[2 * i + 1] << 8));
        out[i] = q / 65535.0;
    }
    return out;
}

} // namespace xbias
