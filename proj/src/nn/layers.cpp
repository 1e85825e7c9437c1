#include "xbias/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "xbias/core/error.hpp"

namespace xbias::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using ConstMapRow = Eigen::Map<const RowMat>;

Tensor to_tensor(const Image& image) {
    Tensor t(Shape{image.channels, image.height, image.width});
    for (int c = 0; c < image.channels; ++c) {
        for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x) t.at(c, y, x) = image.at(x, y, c) / 255.0 - 0.5;
        }
    }
    return t;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, bool relu)
    : Layer(std::move(name)), in_(in_channels), out_(out_channels), k_(kernel), relu_(relu) {
    if (kernel < 1 || kernel % 2 == 0) throw Error("conv kernel must be odd");
    params_.assign(static_cast<std::size_t>(out_) * in_ * k_ * k_ + out_, 0.0);
}

Shape Conv2d::output_shape(const Shape& in) const {
    if (in.channels != in_) throw Error("layer " + name_ + ": channel mismatch");
    return {out_, in.height, in.width};
}

void Conv2d::init_he(std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (in_ * k_ * k_)));
    const std::size_t nw = static_cast<std::size_t>(out_) * in_ * k_ * k_;
    for (std::size_t i = 0; i < nw; ++i) params_[i] = dist(rng);
    std::fill(params_.begin() + static_cast<std::ptrdiff_t>(nw), params_.end(), 0.0);
}

void Conv2d::im2col(const Tensor& in, std::vector<double>& cols) const {
    const int h = in.shape.height, w = in.shape.width, pad = k_ / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    cols.assign(static_cast<std::size_t>(in_) * k_ * k_ * hw, 0.0);
    std::size_t row = 0;
    for (int c = 0; c < in_; ++c) {
        for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx, ++row) {
                double* dst = cols.data() + row * hw;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - pad;
                    if (sy < 0 || sy >= h) continue;
                    const double* src = &in.values[(static_cast<std::size_t>(c) * h + sy) * w];
                    const int x0 = std::max(0, pad - kx), x1 = std::min(w, w + pad - kx);
                    for (int x = x0; x < x1; ++x) dst[static_cast<std::size_t>(y) * w + x] = src[x + kx - pad];
                }
            }
        }
    }
}

void Conv2d::forward(const Tensor& in, Tensor& out) const {
    const Shape os = output_shape(in.shape);
    const int kk = in_ * k_ * k_;
    const int hw = os.height * os.width;
    std::vector<double> cols;
    im2col(in, cols);
    out = Tensor(os);
    ConstMapRow wmat(params_.data(), out_, kk);
    ConstMapRow cmat(cols.data(), kk, hw);
    MapRow omat(out.values.data(), out_, hw);
    omat.noalias() = wmat * cmat;
    const double* bias = params_.data() + static_cast<std::size_t>(out_) * kk;
    for (int o = 0; o < out_; ++o) {
        auto r = omat.row(o);
        r.array() += bias[o];
        if (relu_) r = r.cwiseMax(0.0);
    }
}

void Conv2d::backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor* grad_in,
                      std::span<double> param_grads) const {
    const int kk = in_ * k_ * k_;
    const int h = in.shape.height, w = in.shape.width;
    const int hw = h * w;
    RowMat g = ConstMapRow(grad_out.values.data(), out_, hw);
    if (relu_) {
        ConstMapRow o(out.values.data(), out_, hw);
        g = (o.array() > 0.0).select(g, 0.0);
    }
    std::vector<double> cols;
    im2col(in, cols);
    ConstMapRow cmat(cols.data(), kk, hw);
    if (!param_grads.empty()) {
        MapRow gw(param_grads.data(), out_, kk);
        gw.noalias() += g * cmat.transpose();
        double* gb = param_grads.data() + static_cast<std::size_t>(out_) * kk;
        for (int o = 0; o < out_; ++o) gb[o] += g.row(o).sum();
    }
    if (grad_in) {
        ConstMapRow wmat(params_.data(), out_, kk);
        RowMat gcols = wmat.transpose() * g;
        *grad_in = Tensor(in.shape);
        const int pad = k_ / 2;
        int row = 0;
        for (int c = 0; c < in_; ++c) {
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx, ++row) {
                    const double* src = gcols.data() + static_cast<std::size_t>(row) * hw;
                    for (int y = 0; y < h; ++y) {
                        const int sy = y + ky - pad;
                        if (sy < 0 || sy >= h) continue;
                        double* dst = &grad_in->values[(static_cast<std::size_t>(c) * h + sy) * w];
                        const int x0 = std::max(0, pad - kx), x1 = std::min(w, w + pad - kx);
                        for (int x = x0; x < x1; ++x) dst[x + kx - pad] += src[static_cast<std::size_t>(y) * w + x];
                    }
                }
            }
        }
    }
}

nlohmann::json Conv2d::config() const {
    return {{"in_channels", in_}, {"out_channels", out_}, {"kernel", k_}, {"relu", relu_}};
}

// ---------------------------------------------------------------- AvgPool2

Shape AvgPool2::output_shape(const Shape& in) const { return {in.channels, in.height / 2, in.width / 2}; }

void AvgPool2::forward(const Tensor& in, Tensor& out) const {
    const Shape os = output_shape(in.shape);
    out = Tensor(os);
    for (int c = 0; c < os.channels; ++c) {
        for (int y = 0; y < os.height; ++y) {
            for (int x = 0; x < os.width; ++x) {
                out.at(c, y, x) = 0.25 * (in.at(c, 2 * y, 2 * x) + in.at(c, 2 * y, 2 * x + 1) +
                                          in.at(c, 2 * y + 1, 2 * x) + in.at(c, 2 * y + 1, 2 * x + 1));
            }
        }
    }
}

void AvgPool2::backward(const Tensor& in, const Tensor&, const Tensor& grad_out, Tensor* grad_in,
                        std::span<double>) const {
    if (!grad_in) return;
    *grad_in = Tensor(in.shape);
    const Shape os = grad_out.shape;
    for (int c = 0; c < os.channels; ++c) {
        for (int y = 0; y < os.height; ++y) {
            for (int x = 0; x < os.width; ++x) {
                const double g = 0.25 * grad_out.at(c, y, x);
                grad_in->at(c, 2 * y, 2 * x) = g;
                grad_in->at(c, 2 * y, 2 * x + 1) = g;
                grad_in->at(c, 2 * y + 1, 2 * x) = g;
                grad_in->at(c, 2 * y + 1, 2 * x + 1) = g;
            }
        }
    }
}

// ---------------------------------------------------------------- GlobalAvgPool

void GlobalAvgPool::forward(const Tensor& in, Tensor& out) const {
    out = Tensor(output_shape(in.shape));
    const std::size_t hw = static_cast<std::size_t>(in.shape.height) * in.shape.width;
    for (int c = 0; c < in.shape.channels; ++c) {
        double s = 0;
        const double* p = in.values.data() + c * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
        out.values[c] = s / static_cast<double>(hw);
    }
}

void GlobalAvgPool::backward(const Tensor& in, const Tensor&, const Tensor& grad_out, Tensor* grad_in,
                             std::span<double>) const {
    if (!grad_in) return;
    *grad_in = Tensor(in.shape);
    const std::size_t hw = static_cast<std::size_t>(in.shape.height) * in.shape.width;
    for (int c = 0; c < in.shape.channels; ++c) {
        const double g = grad_out.values[c] / static_cast<double>(hw);
        std::fill_n(grad_in->values.begin() + static_cast<std::ptrdiff_t>(c * hw), hw, g);
    }
}

// ---------------------------------------------------------------- Relu

void Relu::forward(const Tensor& in, Tensor& out) const {
    out = in;
    for (auto& v : out.values) v = std::max(v, 0.0);
}

void Relu::backward(const Tensor& in, const Tensor&, const Tensor& grad_out, Tensor* grad_in,
                    std::span<double>) const {
    if (!grad_in) return;
    *grad_in = grad_out;
    for (std::size_t i = 0; i < in.values.size(); ++i) {
        if (in.values[i] <= 0.0) grad_in->values[i] = 0.0;
    }
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, int in_features, int out_features)
    : Layer(std::move(name)), in_(in_features), out_(out_features) {
    params_.assign(static_cast<std::size_t>(out_) * in_ + out_, 0.0);
}

Shape Linear::output_shape(const Shape& in) const {
    if (static_cast<int>(in.size()) != in_) throw Error("layer " + name_ + ": input size mismatch");
    return {out_, 1, 1};
}

void Linear::init_xavier(std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (in_ + out_)));
    const std::size_t nw = static_cast<std::size_t>(out_) * in_;
    for (std::size_t i = 0; i < nw; ++i) params_[i] = dist(rng);
    std::fill(params_.begin() + static_cast<std::ptrdiff_t>(nw), params_.end(), 0.0);
}

void Linear::forward(const Tensor& in, Tensor& out) const {
    out = Tensor(output_shape(in.shape));
    ConstMapRow wmat(params_.data(), out_, in_);
    Eigen::Map<const Eigen::VectorXd> x(in.values.data(), in_);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + static_cast<std::size_t>(out_) * in_, out_);
    Eigen::Map<Eigen::VectorXd> y(out.values.data(), out_);
    y.noalias() = wmat * x + b;
}

void Linear::backward(const Tensor& in, const Tensor&, const Tensor& grad_out, Tensor* grad_in,
                      std::span<double> param_grads) const {
    Eigen::Map<const Eigen::VectorXd> g(grad_out.values.data(), out_);
    Eigen::Map<const Eigen::VectorXd> x(in.values.data(), in_);
    if (!param_grads.empty()) {
        MapRow gw(param_grads.data(), out_, in_);
        gw.noalias() += g * x.transpose();
        Eigen::Map<Eigen::VectorXd> gb(param_grads.data() + static_cast<std::size_t>(out_) * in_, out_);
        gb += g;
    }
    if (grad_in) {
        *grad_in = Tensor(in.shape);
        ConstMapRow wmat(params_.data(), out_, in_);
        Eigen::Map<Eigen::VectorXd> gx(grad_in->values.data(), in_);
        gx.noalias() = wmat.transpose() * g;
    }
}

nlohmann::json Linear::config() const { return {{"in_features", in_}, {"out_features", out_}}; }

// ---------------------------------------------------------- BinaryLogits

Shape BinaryLogits::output_shape(const Shape& in) const {
    if (in.size() != 1) throw Error("binary_logits expects a single input");
    return {2, 1, 1};
}

void BinaryLogits::forward(const Tensor& in, Tensor& out) const {
    out = Tensor(output_shape(in.shape));
    out.values[0] = -0.5 * in.values.at(0);
    out.values[1] = 0.5 * in.values.at(0);
}

void BinaryLogits::backward(const Tensor& in, const Tensor&, const Tensor& grad_out, Tensor* grad_in,
                            std::span<double>) const {
    if (!grad_in) return;
    *grad_in = Tensor(in.shape);
    grad_in->values[0] = 0.5 * (grad_out.values[1] - grad_out.values[0]);
}

std::unique_ptr<Layer> make_layer(const std::string& kind, const std::string& name, const nlohmann::json& cfg) {
    if (kind == "conv2d") {
        return std::make_unique<Conv2d>(name, cfg.at("in_channels").get<int>(), cfg.at("out_channels").get<int>(),
                                        cfg.at("kernel").get<int>(), cfg.at("relu").get<bool>());
    }
    if (kind == "linear") {
        return std::make_unique<Linear>(name, cfg.at("in_features").get<int>(), cfg.at("out_features").get<int>());
    }
    if (kind == "avgpool2") return std::make_unique<AvgPool2>(name);
    if (kind == "global_avgpool") return std::make_unique<GlobalAvgPool>(name);
    if (kind == "relu") return std::make_unique<Relu>(name);
    if (kind == "binary_logits") return std::make_unique<BinaryLogits>(name);
    throw Error("unknown layer kind '" + kind + "'");
}

} // namespace xbias::nn
