#pragma once

#include <cstddef>
#include <vector>

#include "xbias/core/image.hpp"

namespace xbias::nn {

struct Shape {
    int channels = 0;
    int height = 1;
    int width = 1;

    std::size_t size() const noexcept { return static_cast<std::size_t>(channels) * height * width; }
    bool spatial() const noexcept { return height > 1 || width > 1; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

/// Channel-major (C, H, W) activations in double precision.
struct Tensor {
    Shape shape;
    std::vector<double> values;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0) : shape(s), values(s.size(), fill) {}

    std::size_t size() const noexcept { return values.size(); }
    double& at(int c, int y, int x) {
        return values[(static_cast<std::size_t>(c) * shape.height + y) * shape.width + x];
    }
    double at(int c, int y, int x) const {
        return values[(static_cast<std::size_t>(c) * shape.height + y) * shape.width + x];
    }
};

/// Maps 8-bit pixels to [-0.5, 0.5], channel-major.
Tensor to_tensor(const Image& image);

} // namespace xbias::nn
