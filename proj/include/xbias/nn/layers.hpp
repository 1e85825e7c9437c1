#pragma once

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xbias/nn/tensor.hpp"

namespace xbias::nn {

class Layer {
public:
    explicit Layer(std::string name) : name_(std::move(name)) {}
    virtual ~Layer() = default;

    const std::string& name() const noexcept { return name_; }
    virtual std::string kind() const = 0;
    virtual bool is_convolutional() const noexcept { return false; }

    virtual Shape output_shape(const Shape& in) const = 0;
    virtual void forward(const Tensor& in, Tensor& out) const = 0;
    /// Given dL/d(out), writes dL/d(in) when `grad_in` is non-null and adds
    /// parameter gradients into `param_grads` when it is non-empty.
    virtual void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor* grad_in,
                          std::span<double> param_grads) const = 0;

    std::span<double> params() noexcept { return params_; }
    std::span<const double> params() const noexcept { return params_; }
    virtual nlohmann::json config() const { return nlohmann::json::object(); }
    virtual std::unique_ptr<Layer> clone() const = 0;

protected:
    std::string name_;
    std::vector<double> params_;
};

/// 2-D convolution, stride 1, zero "same" padding, optional fused ReLU.
/// Parameters: weights [out][in][k][k] followed by bias [out].
class Conv2d : public Layer {
public:
    Conv2d(std::string name, int in_channels, int out_channels, int kernel, bool relu);

    std::string kind() const override { return "conv2d"; }
    bool is_convolutional() const noexcept override { return true; }
    Shape output_shape(const Shape& in) const override;
    void forward(const Tensor& in, Tensor& out) const override;
    void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor* grad_in,
                  std::span<double> param_grads) const override;
    nlohmann::json config() const override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

    void init_he(std::mt19937_64& rng);
    int in_channels() const noexcept { return in_; }
    int out_channels() const noexcept { return out_; }
    int kernel() const noexcept { return k_; }
    bool relu() const noexcept { return relu_; }

private:
    void im2col(const Tensor& in, std::vector<double>& cols) const;

    int in_, out_, k_;
    bool relu_;
};

/// 2x2 average pooling, stride 2.
class AvgPool2 : public Layer {
public:
    using Layer::Layer;
    std::string kind() const override { return "avgpool2"; }
    Shape output_shape(const Shape& in) const override;
    void forward(const Tensor& in, Tensor& out) const override;
    void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor* grad_in,
                  std::span<double> param_grads) const override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<AvgPool2>(*this); }
};

class GlobalAvgPool : public Layer {
public:
    using Layer::Layer;
    std::string kind() const override { return "global_avgpool"; }
    Shape output_shape(const Shape& in) const override { return {in.channels, 1, 1}; }
    void forward(const Tensor& in, Tensor& out) const override;
    void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor* grad_in,
                  std::span<double> param_grads) const override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }
};

class Relu : public Layer {
public:
    using Layer::Layer;
    std::string kind() const override { return "relu"; }
    Shape output_shape(const Shape& in) const override { return in; }
    void forward(const Tensor& in, Tensor& out) const override;
    void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor* grad_in,
                  std::span<double> param_grads) const override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }
};

/// Fully connected over the flattened input. Parameters: weights
/// [out][in] followed by bias [out].
class Linear : public Layer {
public:
    Linear(std::string name, int in_features, int out_features);

    std::string kind() const override { return "linear"; }
    Shape output_shape(const Shape& in) const override;
    void forward(const Tensor& in, Tensor& out) const override;
    void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor* grad_in,
                  std::span<double> param_grads) const override;
    nlohmann::json config() const override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Linear>(*this); }

    void init_xavier(std::mt19937_64& rng);
    int in_features() const noexcept { return in_; }
    int out_features() const noexcept { return out_; }

private:
    int in_, out_;
};

/// Maps one score s to the two-class logits (-s/2, s/2).
class BinaryLogits : public Layer {
public:
    using Layer::Layer;
    std::string kind() const override { return "binary_logits"; }
    Shape output_shape(const Shape& in) const override;
    void forward(const Tensor& in, Tensor& out) const override;
    void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor* grad_in,
                  std::span<double> param_grads) const override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<BinaryLogits>(*this); }
};

std::unique_ptr<Layer> make_layer(const std::string& kind, const std::string& name, const nlohmann::json& config);

} // namespace xbias::nn
