#include "xbias/nn/network.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "xbias/core/error.hpp"
#include "xbias/core/seed.hpp"

namespace xbias::nn {

Network::Network(const Network& other) : frozen_layers(other.frozen_layers) {
    layers_.reserve(other.layers_.size());
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
    if (this != &other) {
        Network copy(other);
        *this = std::move(copy);
    }
    return *this;
}

void Network::add(std::unique_ptr<Layer> layer) {
    for (const auto& l : layers_) {
        if (l->name() == layer->name()) throw Error("duplicate layer name '" + layer->name() + "'");
    }
    layers_.push_back(std::move(layer));
}

std::size_t Network::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i]->name() == name) return i;
    }
    throw Error("network has no layer named '" + std::string(name) + "'");
}

std::vector<std::string> Network::layer_names() const {
    std::vector<std::string> out;
    for (const auto& l : layers_) out.push_back(l->name());
    return out;
}

Tensor Network::forward(const Tensor& input) const { return forward_from(0, input); }

std::vector<Tensor> Network::trace(const Tensor& input) const { return trace_from(0, input); }

std::vector<Tensor> Network::trace_from(std::size_t first, const Tensor& input) const {
    std::vector<Tensor> outs;
    outs.reserve(layers_.size() - first);
    const Tensor* cur = &input;
    for (std::size_t i = first; i < layers_.size(); ++i) {
        outs.emplace_back();
        layers_[i]->forward(*cur, outs.back());
        cur = &outs.back();
    }
    return outs;
}

Tensor Network::forward_from(std::size_t first, const Tensor& input) const {
    Tensor a = input, b;
    for (std::size_t i = first; i < layers_.size(); ++i) {
        layers_[i]->forward(a, b);
        std::swap(a, b);
    }
    return a;
}

void Network::backward(std::size_t first, const Tensor& input, const std::vector<Tensor>& outputs,
                       const Tensor& grad_logits, ParamGrads* grads, Tensor* grad_input) const {
    Tensor g = grad_logits, gin;
    for (std::size_t i = layers_.size(); i-- > first;) {
        const Tensor& in = i == first ? input : outputs[i - first - 1];
        const Tensor& out = outputs[i - first];
        const bool need_input_grad = i > first || grad_input != nullptr;
        std::span<double> pg;
        if (grads && !(*grads)[i].empty()) pg = (*grads)[i];
        layers_[i]->backward(in, out, g, need_input_grad ? &gin : nullptr, pg);
        if (need_input_grad) std::swap(g, gin);
    }
    if (grad_input) *grad_input = std::move(g);
}

Tensor Network::gradient_wrt_output(std::size_t layer_index, const Tensor& activation, const Tensor& grad_logits) const {
    if (layer_index + 1 >= layers_.size()) return grad_logits; // output layer itself
    const auto outs = trace_from(layer_index + 1, activation);
    Tensor g;
    backward(layer_index + 1, activation, outs, grad_logits, nullptr, &g);
    return g;
}

ParamGrads Network::make_grads() const {
    ParamGrads g;
    for (const auto& l : layers_) g.emplace_back(l->params().size(), 0.0);
    return g;
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l->params().size();
    return n;
}

std::uint64_t Network::checksum(std::size_t begin, std::size_t end) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = begin; i < end && i < layers_.size(); ++i) {
        auto p = layers_[i]->params();
        h = fnv1a(std::string_view(reinterpret_cast<const char*>(p.data()), p.size_bytes()), h);
    }
    return h;
}

Shape Network::output_shape(const Shape& input) const {
    Shape s = input;
    for (const auto& l : layers_) s = l->output_shape(s);
    return s;
}

namespace {
constexpr char kMagic[8] = {'X', 'B', 'I', 'A', 'S', 'N', 'N', '1'};
static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
} // namespace

void save_checkpoint(const std::filesystem::path& path, const Network& net) {
    nlohmann::json header;
    header["frozen_layers"] = net.frozen_layers;
    header["layers"] = nlohmann::json::array();
    std::size_t offset = 0;
    for (std::size_t i = 0; i < net.size(); ++i) {
        const Layer& l = net.layer(i);
        header["layers"].push_back({{"name", l.name()},
                                    {"kind", l.kind()},
                                    {"config", l.config()},
                                    {"param_offset", offset},
                                    {"param_count", l.params().size()}});
        offset += l.params().size();
    }
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (std::size_t i = 0; i < net.size(); ++i) {
        auto p = net.layer(i).params();
        out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size_bytes()));
    }
    if (!out) throw Error("failed writing checkpoint " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read checkpoint " + path.string());
    char magic[8];
    std::uint64_t len = 0;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0 || len > (1U << 24)) {
        throw Error("not a model checkpoint: " + path.string());
    }
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    const auto header = nlohmann::json::parse(text);
    Network net;
    for (const auto& j : header.at("layers")) {
        auto layer = make_layer(j.at("kind").get<std::string>(), j.at("name").get<std::string>(), j.at("config"));
        if (layer->params().size() != j.at("param_count").get<std::size_t>()) {
            throw Error("checkpoint parameter count mismatch for layer " + layer->name());
        }
        net.add(std::move(layer));
    }
    for (std::size_t i = 0; i < net.size(); ++i) {
        auto p = net.layer(i).params();
        in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(p.size_bytes()));
    }
    if (!in) throw Error("truncated checkpoint " + path.string());
    net.frozen_layers = header.at("frozen_layers").get<std::size_t>();
    return net;
}

} // namespace xbias::nn
