#include "xbias/training/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "xbias/dataset/synthetic.hpp"
#include "xbias/nn/adam.hpp"

namespace xbias::training {

nn::Network build_extractor(const ExtractorConfig& cfg, std::uint64_t seed) {
    if (cfg.channels.empty()) throw ConfigError("extractor needs at least one conv block");
    std::mt19937_64 rng(seed);
    nn::Network net;
    int in = 3;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
        auto conv = std::make_unique<nn::Conv2d>(fmt::format("conv{}", i + 1), in, cfg.channels[i], cfg.kernel, true);
        conv->init_he(rng);
        net.add(std::move(conv));
        if (i + 1 < cfg.channels.size()) net.add(std::make_unique<nn::AvgPool2>(fmt::format("pool{}", i + 1)));
        in = cfg.channels[i];
    }
    net.add(std::make_unique<nn::GlobalAvgPool>("gap"));
    net.frozen_layers = net.size();
    return net;
}

namespace {

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

int feature_width(const nn::Network& extractor) {
    for (std::size_t i = extractor.size(); i-- > 0;) {
        if (const auto* conv = dynamic_cast<const nn::Conv2d*>(&extractor.layer(i))) return conv->out_channels();
    }
    throw ConfigError("extractor has no convolutional layer");
}

} // namespace

PretrainReport pretrain_extractor(nn::Network& extractor, const PretrainConfig& cfg) {
    const auto task = dataset::generate_shape_task(cfg.samples, cfg.image_size, cfg.seed);
    const int outputs = static_cast<int>(dataset::shape_task_labels().size());

    nn::Network net(extractor);
    std::mt19937_64 rng(cfg.seed ^ 0x5eedULL);
    auto head = std::make_unique<nn::Linear>("aux", feature_width(extractor), outputs);
    head->init_xavier(rng);
    net.add(std::move(head));
    net.frozen_layers = 0;

    std::vector<nn::Tensor> inputs;
    inputs.reserve(task.size());
    for (const auto& s : task) inputs.push_back(nn::to_tensor(s.image));

    nn::Adam adam(net, 0, cfg.learning_rate);
    std::vector<std::size_t> order(task.size());
    std::iota(order.begin(), order.end(), 0);
    PretrainReport report;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            auto grads = net.make_grads();
            for (std::size_t b = start; b < end; ++b) {
                const auto& x = inputs[order[b]];
                const auto& y = task[order[b]].targets;
                const auto outs = net.trace(x);
                const auto& z = outs.back();
                nn::Tensor g(z.shape);
                for (int k = 0; k < outputs; ++k) {
                    const double p = sigmoid(z.values[k]);
                    g.values[k] = p - y[k];
                    epoch_loss -= y[k] * std::log(std::max(p, 1e-12)) + (1 - y[k]) * std::log(std::max(1 - p, 1e-12));
                }
                net.backward(0, x, outs, g, &grads, nullptr);
            }
            adam.step(net, grads, 1.0 / static_cast<double>(end - start));
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss)) throw TrainingError("extractor pretraining diverged");
        if (epoch == 0) report.initial_loss = epoch_loss;
        report.final_loss = epoch_loss;
    }
    for (std::size_t i = 0; i < extractor.size(); ++i) {
        auto src = net.layer(i).params();
        auto dst = extractor.layer(i).params();
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return report;
}

nn::Network attach_head(const nn::Network& extractor, int hidden, std::uint64_t seed) {
    if (extractor.frozen_layers != extractor.size()) throw ConfigError("attach_head expects a bare extractor");
    std::mt19937_64 rng(seed);
    nn::Network net(extractor);
    auto fc1 = std::make_unique<nn::Linear>("fc1", feature_width(extractor), hidden);
    fc1->init_xavier(rng);
    net.add(std::move(fc1));
    net.add(std::make_unique<nn::Relu>("fc1_relu"));
    auto score = std::make_unique<nn::Linear>("score", hidden, 1);
    score->init_xavier(rng);
    net.add(std::move(score));
    net.add(std::make_unique<nn::BinaryLogits>("logits"));
    return net;
}

int argmax2(const nn::Tensor& logits) { return logits.values.at(1) > logits.values.at(0) ? 1 : 0; }

nn::Tensor Model::logits(const Image& image) const { return network_.forward(nn::to_tensor(image)); }

nn::Tensor Model::logits_from_features(const nn::Tensor& features) const {
    return network_.forward_from(network_.frozen_layers, features);
}

int Model::predict(const Image& image) const { return argmax2(logits(image)); }

int Model::predict_from_features(const nn::Tensor& features) const { return argmax2(logits_from_features(features)); }

nn::Tensor Model::features(const Image& image) const {
    nn::Tensor x = nn::to_tensor(image), y;
    for (std::size_t i = 0; i < network_.frozen_layers; ++i) {
        network_.layer(i).forward(x, y);
        std::swap(x, y);
    }
    return x;
}

FeatureCache compute_features(const nn::Network& net, const dataset::Dataset& ds) {
    nn::Network extractor;
    for (std::size_t i = 0; i < net.frozen_layers; ++i) extractor.add(net.layer(i).clone());
    FeatureCache cache;
    for (const auto& s : ds.samples) cache.emplace(s.id, extractor.forward(nn::to_tensor(s.image)));
    return cache;
}

nlohmann::json TrainConfig::to_json() const {
    return {{"epochs", epochs},   {"learning_rate", learning_rate}, {"batch_size", batch_size},
            {"hidden", hidden},   {"weight_decay", weight_decay},   {"seed", seed}};
}

TrainResult train_model(const nn::Network& extractor, const dataset::Dataset& ds, std::span<const std::string> train_ids,
                        const TrainConfig& cfg, const FeatureCache* cache) {
    if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.hidden < 1 || !(cfg.learning_rate > 0)) {
        throw ConfigError("invalid training configuration: " + cfg.to_json().dump());
    }
    std::vector<nn::Tensor> features;
    std::vector<int> labels;
    std::array<int, 2> per_class{0, 0};
    Model probe(extractor);
    for (const auto& id : train_ids) {
        const auto& s = ds.sample(id);
        if (cache) {
            auto it = cache->find(id);
            features.push_back(it != cache->end() ? it->second : probe.features(s.image));
        } else {
            features.push_back(probe.features(s.image));
        }
        labels.push_back(s.class_label);
        ++per_class[s.class_label];
    }
    if (per_class[0] == 0 || per_class[1] == 0) throw TrainingError("training split must contain both classes");

    TrainResult result;
    result.report.extractor_checksum_before = extractor.checksum(0, extractor.frozen_layers);
    nn::Network net = attach_head(extractor, cfg.hidden, cfg.seed);
    const std::size_t first = net.frozen_layers;
    nn::Adam adam(net, first, cfg.learning_rate, cfg.weight_decay);
    std::mt19937_64 rng(cfg.seed ^ 0x7ea1ULL);
    std::vector<std::size_t> order(features.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            auto grads = net.make_grads();
            for (std::size_t b = start; b < end; ++b) {
                const auto& x = features[order[b]];
                const int y = labels[order[b]];
                const auto outs = net.trace_from(first, x);
                const auto& z = outs.back().values;
                const double m = std::max(z[0], z[1]);
                const double e0 = std::exp(z[0] - m), e1 = std::exp(z[1] - m);
                const double p1 = e1 / (e0 + e1);
                loss -= std::log(std::max(y == 1 ? p1 : 1.0 - p1, 1e-300));
                nn::Tensor g(outs.back().shape);
                g.values[0] = (1.0 - p1) - (y == 0 ? 1.0 : 0.0);
                g.values[1] = p1 - (y == 1 ? 1.0 : 0.0);
                net.backward(first, x, outs, g, &grads, nullptr);
            }
            adam.step(net, grads, 1.0 / static_cast<double>(end - start));
        }
        loss /= static_cast<double>(order.size());
        result.report.final_loss = loss;
        if (!std::isfinite(loss)) {
            throw TrainingError(fmt::format("training diverged at epoch {} (loss {}); config: {}", epoch + 1, loss,
                                            cfg.to_json().dump()));
        }
    }

    result.model = Model(std::move(net));
    long correct = 0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        correct += result.model.predict_from_features(features[i]) == labels[i];
    }
    result.report.train_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(features.size());
    result.report.extractor_checksum_after = result.model.extractor_checksum();
    return result;
}

std::map<std::string, int> predict_all(const Model& model, const dataset::Dataset& ds, std::span<const std::string> ids,
                                       const FeatureCache* cache) {
    std::map<std::string, int> out;
    for (const auto& id : ids) {
        if (cache) {
            if (auto it = cache->find(id); it != cache->end()) {
                out[id] = model.predict_from_features(it->second);
                continue;
            }
        }
        out[id] = model.predict(ds.sample(id).image);
    }
    return out;
}

metrics::SubgroupAccuracyTable accuracy_from_predictions(const dataset::Dataset& ds,
                                                         const std::map<std::string, int>& predictions,
                                                         std::span<const std::string> test_ids,
                                                         const std::string& attribute,
                                                         const metrics::CellGrid<double>& weights,
                                                         const std::string& composition_label) {
    const auto& spec = ds.attribute(attribute);
    metrics::SubgroupAccuracyTable t;
    t.attribute = attribute;
    t.class_names = ds.class_names;
    t.instances = spec.instances;
    t.composition_label = composition_label;
    t.weights = weights;
    metrics::CellGrid<long> correct{};
    for (const auto& id : test_ids) {
        const auto& s = ds.sample(id);
        const int inst = spec.instance_index(s.attributes.at(attribute));
        ++t.tested[s.class_label][inst];
        correct[s.class_label][inst] += predictions.at(id) == s.class_label;
    }
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 2; ++i) {
            if (t.tested[c][i] == 0) {
                throw ValidationError(fmt::format("subgroup ({}, {}={}) has no test samples", ds.class_names[c],
                                                  attribute, spec.instances[i]));
            }
            t.accuracy[c][i] = 100.0 * static_cast<double>(correct[c][i]) / static_cast<double>(t.tested[c][i]);
        }
    }
    return t;
}

metrics::SubgroupAccuracyTable evaluate_subgroups(const Model& model, const dataset::Dataset& ds,
                                                  std::span<const std::string> test_ids, const std::string& attribute,
                                                  const metrics::CellGrid<double>& weights,
                                                  const std::string& composition_label, const FeatureCache* cache) {
    const auto preds = predict_all(model, ds, test_ids, cache);
    return accuracy_from_predictions(ds, preds, test_ids, attribute, weights, composition_label);
}

std::map<dataset::SubgroupKey, double> joint_accuracy(const dataset::Dataset& ds,
                                                      const std::map<std::string, int>& predictions,
                                                      std::span<const std::string> test_ids) {
    std::map<dataset::SubgroupKey, std::pair<long, long>> tally;
    for (const auto& id : test_ids) {
        const auto& s = ds.sample(id);
        auto& [correct, total] = tally[ds.subgroup_of(s)];
        ++total;
        correct += predictions.at(id) == s.class_label;
    }
    std::map<dataset::SubgroupKey, double> out;
    for (const auto& [key, ct] : tally) out[key] = 100.0 * static_cast<double>(ct.first) / static_cast<double>(ct.second);
    return out;
}

} // namespace xbias::training
