#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xbias/dataset/compose.hpp"
#include "xbias/dataset/synthetic.hpp"
#include "xbias/gradcam/gradcam.hpp"
#include "xbias/training/model.hpp"

namespace xbias::experiment {

struct SchemaKey {
    const char* key; ///< "section.name"
    const char* type; ///< int, uint, double, bool, string, list
    const char* default_value;
    const char* help;
};

/// Every accepted configuration key with its type and default.
const std::vector<SchemaKey>& config_schema();

/// Flat "section.key" -> value map holding every schema key.
using ConfigMap = std::map<std::string, std::string>;

struct ExperimentConfig {
    std::string name;
    std::uint64_t seed = 0;
    std::filesystem::path output;
    std::string judging = "auto";
    std::vector<dataset::Ratio> ratios;

    std::string dataset_source = "synthetic";
    dataset::SyntheticConfig synthetic;
    std::filesystem::path import_root;
    std::filesystem::path import_manifest;

    std::vector<std::string> attributes; ///< composed attributes; empty = first dataset attribute
    bool joint = false;
    long class_train_size = 300;
    double test_fraction = 0.25;

    training::ExtractorConfig extractor;
    training::PretrainConfig pretrain;
    training::TrainConfig train;

    gradcam::ExplainParams explain;
    int budget = 50;
    bool write_explanations = false;

    bool tcav_enabled = true;
    std::string tcav_layer = "conv3";
    int tcav_runs = 10;
    int concept_examples = 100;
    std::filesystem::path concepts_dir;
    double alpha = 0.05;

    bool annotation_server = false;
    int annotators_required = 1;

    std::map<std::string, double> tolerance;

    /// Canonical flattened form (all keys, defaults filled in).
    ConfigMap values;
};

/// Parses INI text; unknown sections or keys, bad values and failed
/// validation raise ConfigError. `overrides` are "section.key=value".
ExperimentConfig parse_config(const std::string& ini_text, const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
ExperimentConfig config_from_map(const ConfigMap& values);

/// Sorted INI rendering of the canonical map.
std::string canonical_ini(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);
/// Keys whose values differ, as "key: old -> new".
std::vector<std::string> config_diff(const ExperimentConfig& before, const ExperimentConfig& after);

} // namespace xbias::experiment
