#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "xbias/nn/layers.hpp"

namespace xbias::nn {

/// Per-layer parameter gradient buffers, laid out like Layer::params().
using ParamGrads = std::vector<std::vector<double>>;

/// Sequential network of uniquely named layers. Layers [0, frozen_layers)
/// form the feature extractor and are never updated by head training.
class Network {
public:
    Network() = default;
    Network(const Network& other);
    Network& operator=(const Network& other);
    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;

    void add(std::unique_ptr<Layer> layer);
    std::size_t size() const noexcept { return layers_.size(); }
    const Layer& layer(std::size_t i) const { return *layers_.at(i); }
    Layer& layer(std::size_t i) { return *layers_.at(i); }
    std::size_t index_of(std::string_view name) const;
    std::vector<std::string> layer_names() const;

    std::size_t frozen_layers = 0;

    Tensor forward(const Tensor& input) const;
    /// Outputs of every layer; result[i] is the output of layer i.
    std::vector<Tensor> trace(const Tensor& input) const;
    /// Runs layers [first, size()) on `input` (the input of layer `first`)
    /// and returns their outputs.
    std::vector<Tensor> trace_from(std::size_t first, const Tensor& input) const;
    Tensor forward_from(std::size_t first, const Tensor& input) const;

    /// Backpropagates `grad_logits` through layers [first, size()).
    /// `outputs` come from trace_from(first, input). Parameter gradients are
    /// added into `grads` (sized by make_grads) for those layers.
    void backward(std::size_t first, const Tensor& input, const std::vector<Tensor>& outputs,
                  const Tensor& grad_logits, ParamGrads* grads, Tensor* grad_input) const;

    /// d(grad_logits . logits) / d(output of layer `layer_index`), evaluated
    /// at that layer's output `activation`.
    Tensor gradient_wrt_output(std::size_t layer_index, const Tensor& activation, const Tensor& grad_logits) const;

    ParamGrads make_grads() const;
    std::size_t parameter_count() const;
    /// FNV-1a over the raw parameter bytes of layers [begin, end).
    std::uint64_t checksum(std::size_t begin, std::size_t end) const;
    std::uint64_t extractor_checksum() const { return checksum(0, frozen_layers); }

    Shape output_shape(const Shape& input) const;

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

/// Self-describing checkpoint: magic, JSON layer index, then parameters as
/// little-endian doubles.
void save_checkpoint(const std::filesystem::path& path, const Network& net);
Network load_checkpoint(const std::filesystem::path& path);

} // namespace xbias::nn
