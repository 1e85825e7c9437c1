#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xbias/core/error.hpp"
#include "xbias/core/image.hpp"
#include "xbias/dataset/types.hpp"
#include "xbias/metrics/types.hpp"
#include "xbias/nn/network.hpp"

namespace xbias::gradcam {

/// Max-normalised class-activation map at input resolution.
struct SaliencyMap {
    int width = 0;
    int height = 0;
    std::vector<double> values;
    int target_class = 0;
    std::string layer;
    /// Set when the rectified map is zero everywhere.
    bool no_signal = false;

    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Activation of a layer together with d(class logit)/d(activation).
struct LayerGradient {
    std::size_t layer_index = 0;
    nn::Tensor activation;
    nn::Tensor gradient;
    nn::Tensor logits;
};

LayerGradient layer_gradient(const nn::Network& net, const nn::Tensor& input, std::size_t layer_index,
                             int target_class);

/// Spatial mean of the gradient per channel.
std::vector<double> channel_weights(const nn::Tensor& gradient);

/// Rectified weighted channel sum at activation resolution.
std::vector<double> weighted_activation(const nn::Tensor& activation, std::span<const double> weights);

/// Bilinear resampling with half-pixel centres and edge clamping.
std::vector<double> upsample_bilinear(std::span<const double> src, int src_w, int src_h, int dst_w, int dst_h);

/// Throws ConfigError if `layer` is unknown or not convolutional.
SaliencyMap grad_cam(const nn::Network& net, const Image& image, int target_class, const std::string& layer);

/// Fraction of the smallest top-saliency pixel set holding at least
/// `mass_quantile` of the total mass that falls inside `mask`. Pixels are
/// ranked by value, ties by raster index. nullopt when the map has no mass.
std::optional<double> overlap_score(const SaliencyMap& saliency, const Mask& mask, double mass_quantile);

enum class VerdictSource { automatic, human };

struct BiasVerdict {
    bool biased = false;
    std::string attribute;
    std::string feature;
    VerdictSource source = VerdictSource::automatic;
    std::optional<double> overlap;
    std::string annotator;

    friend bool operator==(const BiasVerdict&, const BiasVerdict&) = default;
};

nlohmann::json to_json(const BiasVerdict& v);
BiasVerdict verdict_from_json(const nlohmann::json& j);

struct ExplanationRecord {
    std::string sample_id;
    int predicted = 0;
    bool correct = false;
    SaliencyMap saliency;
    std::optional<BiasVerdict> verdict;
    /// No verdict possible (missing masks); excluded from counts.
    bool unjudgeable = false;
};

struct VerdictParams {
    double threshold = 0.5;
    double mass_quantile = 0.2;

    nlohmann::json to_json() const;
};

struct FeatureList {
    std::string attribute;
    std::vector<std::string> features;
};

/// Feature lists of every attribute of a dataset, in declaration order.
std::vector<FeatureList> feature_lists(const dataset::Dataset& ds);

/// Biased iff the best-overlapping listed feature reaches the threshold
/// (closed). Ties go to the earlier feature. A no-signal map is judged
/// unbiased with overlap 0. nullopt if a listed feature has no mask.
std::optional<BiasVerdict> auto_verdict(const SaliencyMap& saliency, const std::map<std::string, Mask>& masks,
                                        const std::vector<FeatureList>& lists, const VerdictParams& params);

/// Up to `budget` test ids per (class, instance of `attribute`), chosen by
/// seeded priority. Throws ValidationError when a cell has fewer.
std::vector<std::string> select_for_examination(const dataset::Dataset& ds, std::span<const std::string> test_ids,
                                                const std::string& attribute, int budget, std::uint64_t seed);

struct ExplainParams {
    std::string layer = "conv3";
    VerdictParams verdict;
};

/// Grad-CAM for the predicted class of every id, auto-judged when the
/// sample has masks for every listed feature.
std::vector<ExplanationRecord> explain(const nn::Network& net, const dataset::Dataset& ds,
                                       std::span<const std::string> ids, const ExplainParams& params,
                                       bool judge = true);

/// Per-subgroup counts for one attribute. A record counts as biased only
/// when its verdict names that attribute. Unjudgeable records are skipped;
/// throws ValidationError for records that are neither judged nor
/// unjudgeable.
metrics::BiasCountTable collect_counts(std::span<const ExplanationRecord> records, const dataset::Dataset& ds,
                                       const std::string& attribute, const std::string& composition_label);

/// Jet-style colour ramp, blended over the image with the given opacity.
inline constexpr double kOverlayAlpha = 0.45;
std::array<std::uint8_t, 3> colormap(double v);
Image render_overlay(const Image& image, const SaliencyMap& saliency, double alpha = kOverlayAlpha);

nlohmann::json sidecar_json(const ExplanationRecord& record, const ExplainParams& params);

/// Writes <id>.overlay.png, <id>.map.png (16-bit) and <id>.json under dir.
void write_explanation(const std::filesystem::path& dir, const ExplanationRecord& record, const Image& image,
                       const ExplainParams& params);
/// Reads the sidecar and raw map written by write_explanation.
ExplanationRecord read_explanation(const std::filesystem::path& dir, const std::string& sample_id);

} // namespace xbias::gradcam
