#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace xbias {

/// Interleaved 8-bit image, row-major, `channels` samples per pixel.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c),
          pixels(static_cast<std::size_t>(w) * h * c, fill) {}

    std::uint8_t& at(int x, int y, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    bool empty() const noexcept { return pixels.empty(); }

    friend bool operator==(const Image&, const Image&) = default;
};

/// Binary H x W mask; each cell is 0 or 1.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    Mask() = default;
    Mask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

    std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::size_t count() const noexcept;

    friend bool operator==(const Mask&, const Mask&) = default;
};

void write_png(const std::filesystem::path& path, const Image& image);
/// Reads 8-bit or 16-bit PNGs; palette, gray and alpha are converted to
/// `want_channels` (1 or 3).
Image read_png(const std::filesystem::path& path, int want_channels = 3);

/// Masks are stored as single-channel PNGs with values 0/255.
void write_mask_png(const std::filesystem::path& path, const Mask& mask);
Mask read_mask_png(const std::filesystem::path& path);

/// Lossless single-channel 16-bit PNG for values in [0, 1].
void write_unit_map_png16(const std::filesystem::path& path, int width, int height,
                          std::span<const double> values);
std::vector<double> read_unit_map_png16(const std::filesystem::path& path, int& width, int& height);

} // namespace xbias
