#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xbias/core/error.hpp"
#include "xbias/dataset/concepts.hpp"
#include "xbias/nn/network.hpp"

namespace xbias::tcav {

using Vector = std::vector<double>;

/// Unit direction in a layer's flattened activation space, pointing towards
/// the concept's positives.
struct CAV {
    std::string concept_name;
    std::string layer;
    Vector direction;
    /// Held-out accuracy of the underlying linear classifier.
    double accuracy = 0;
    std::uint64_t seed = 0;
};

struct CavOptions {
    double holdout_fraction = 0.25;
    int iterations = 150;
    double learning_rate = 0.05;
    double l2 = 1e-3;
    /// Resample training examples with replacement (run-to-run variation).
    bool bootstrap = false;
};

/// Flattened output of layer `layer_index` for `input`.
Vector layer_activation(const nn::Network& net, std::size_t layer_index, const nn::Tensor& input);

/// Logistic regression of positives vs negatives; throws Error when every
/// activation coordinate is constant over both sets.
CAV train_cav_on_activations(std::span<const Vector> positives, std::span<const Vector> negatives,
                             const std::string& layer, const std::string& concept_name, std::uint64_t seed,
                             const CavOptions& options = {});

CAV train_cav(const nn::Network& net, const std::string& layer, const dataset::ConceptSet& cset,
              std::uint64_t seed, const CavOptions& options = {});

/// Gradient of the class logit with respect to the flattened layer output.
Vector class_gradient(const nn::Network& net, std::size_t layer_index, const nn::Tensor& input, int target_class);

/// d(class logit)/d(activation) . cav at the image's activation.
double directional_derivative(const nn::Network& net, const std::string& layer, const nn::Tensor& input,
                              int target_class, const CAV& cav);

/// Percentage of gradients with a strictly positive projection on `cav`.
double score_from_gradients(std::span<const Vector> gradients, const CAV& cav);

struct Significance {
    double p_value = 1.0;
    bool significant = false;
    double t_statistic = 0;
    double degrees_of_freedom = 0;
};

/// Welch two-sided two-sample t-test. Needs at least two values per side.
Significance significance_test(std::span<const double> concept_scores, std::span<const double> random_scores,
                               double alpha = 0.05);

struct ConceptActivations {
    std::string name;
    std::vector<Vector> positives;
    std::vector<Vector> negatives;
};

ConceptActivations concept_activations(const nn::Network& net, std::size_t layer_index,
                                       const dataset::ConceptSet& cset);

/// One CAV per run, each from its own seed and a bootstrap resample.
std::vector<CAV> train_cav_runs(const ConceptActivations& acts, const std::string& layer, int n_runs,
                                std::uint64_t seed, const CavOptions& options = {});

/// Random-vs-random CAVs: both sides of each run are drawn without
/// replacement from `pool`, `cardinality` examples each.
std::vector<CAV> train_random_runs(std::span<const Vector> pool, std::size_t cardinality, const std::string& layer,
                                   int n_runs, std::uint64_t seed, const CavOptions& options = {});

struct TCAVResult {
    int target_class = 0;
    std::string concept_name;
    std::string layer;
    double score = 0;
    std::vector<double> run_scores;
    std::vector<double> random_scores;
    double p_value = 1.0;
    bool significant = false;
    double alpha = 0.05;

    nlohmann::json to_json() const;
};

TCAVResult tcav_from_runs(std::span<const Vector> class_gradients, int target_class, std::span<const CAV> runs,
                          std::span<const CAV> random_runs, double alpha = 0.05);

/// Full computation for one (class, concept): runs, random runs drawn from
/// the concept's own negatives, and the significance test.
TCAVResult tcav_score(const nn::Network& net, const std::string& layer, const dataset::ConceptSet& cset,
                      std::span<const nn::Tensor> class_inputs, int target_class, int n_runs, std::uint64_t seed,
                      const CavOptions& options = {});

} // namespace xbias::tcav
