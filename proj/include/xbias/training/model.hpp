#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xbias/core/error.hpp"
#include "xbias/dataset/types.hpp"
#include "xbias/metrics/types.hpp"
#include "xbias/nn/network.hpp"

namespace xbias::training {

/// Convolutional feature extractor: conv blocks with 2x2 average pooling
/// between them, ending in global average pooling. Layer names are
/// conv1..convN, pool1..pool(N-1) and "gap".
struct ExtractorConfig {
    std::vector<int> channels{16, 32, 32};
    int kernel = 3;
};

nn::Network build_extractor(const ExtractorConfig& cfg, std::uint64_t seed);

/// Brief multi-label pretraining on the auxiliary shape task.
struct PretrainConfig {
    int samples = 3000;
    int image_size = 32;
    int epochs = 10;
    int batch_size = 16;
    double learning_rate = 0.003;
    std::uint64_t seed = 0;
};

struct PretrainReport {
    double initial_loss = 0;
    double final_loss = 0;
};

PretrainReport pretrain_extractor(nn::Network& extractor, const PretrainConfig& cfg);

/// Classifier head (fc1 -> relu -> score -> logits) on a frozen extractor;
/// the two logits are -score/2 and score/2.
nn::Network attach_head(const nn::Network& extractor, int hidden, std::uint64_t seed);

/// A trained classifier: frozen extractor plus trained head.
class Model {
public:
    Model() = default;
    explicit Model(nn::Network network) : network_(std::move(network)) {}

    const nn::Network& network() const noexcept { return network_; }
    nn::Network& network() noexcept { return network_; }

    nn::Tensor logits(const Image& image) const;
    /// Logits from cached extractor output (the output of the last frozen layer).
    nn::Tensor logits_from_features(const nn::Tensor& features) const;
    int predict(const Image& image) const;
    int predict_from_features(const nn::Tensor& features) const;

    /// Output of the last frozen layer.
    nn::Tensor features(const Image& image) const;
    std::uint64_t extractor_checksum() const { return network_.extractor_checksum(); }

private:
    nn::Network network_;
};

/// Argmax with ties resolved towards class 0.
int argmax2(const nn::Tensor& logits);

/// Extractor outputs keyed by sample id; valid for every model sharing the
/// same frozen extractor.
using FeatureCache = std::map<std::string, nn::Tensor, std::less<>>;

FeatureCache compute_features(const nn::Network& net, const dataset::Dataset& ds);

struct TrainConfig {
    int epochs = 60;
    double learning_rate = 0.01;
    int batch_size = 32;
    int hidden = 16;
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

class TrainingError : public StageError {
public:
    using StageError::StageError;
};

struct TrainReport {
    double train_accuracy = 0;
    double final_loss = 0;
    std::uint64_t extractor_checksum_before = 0;
    std::uint64_t extractor_checksum_after = 0;
};

struct TrainResult {
    Model model;
    TrainReport report;
};

/// Trains only the head of a fresh extractor+head network. `extractor` must
/// have frozen_layers == size(). Throws TrainingError when the loss becomes
/// non-finite.
TrainResult train_model(const nn::Network& extractor, const dataset::Dataset& ds,
                        std::span<const std::string> train_ids, const TrainConfig& cfg,
                        const FeatureCache* cache = nullptr);

/// Predicted class per sample id.
std::map<std::string, int> predict_all(const Model& model, const dataset::Dataset& ds,
                                       std::span<const std::string> ids, const FeatureCache* cache = nullptr);

/// Accuracy per (class, instance of `attribute`) from precomputed
/// predictions. Throws ValidationError for an empty subgroup.
metrics::SubgroupAccuracyTable accuracy_from_predictions(const dataset::Dataset& ds,
                                                         const std::map<std::string, int>& predictions,
                                                         std::span<const std::string> test_ids,
                                                         const std::string& attribute,
                                                         const metrics::CellGrid<double>& weights,
                                                         const std::string& composition_label);

metrics::SubgroupAccuracyTable evaluate_subgroups(const Model& model, const dataset::Dataset& ds,
                                                  std::span<const std::string> test_ids, const std::string& attribute,
                                                  const metrics::CellGrid<double>& weights,
                                                  const std::string& composition_label,
                                                  const FeatureCache* cache = nullptr);

/// Accuracy for each full subgroup (class x every attribute), percent.
std::map<dataset::SubgroupKey, double> joint_accuracy(const dataset::Dataset& ds,
                                                      const std::map<std::string, int>& predictions,
                                                      std::span<const std::string> test_ids);

} // namespace xbias::training
