#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "xbias/experiment/config.hpp"
#include "xbias/experiment/store.hpp"

namespace xbias::experiment {

/// Per-ratio stages in execution order.
const std::vector<std::string>& ratio_stages();

struct RatioStatus {
    std::string ratio;
    std::string state; ///< complete | pending_annotation | failed | stopped
    std::string failed_stage;
    std::string error;
};

struct RunStatus {
    std::vector<RatioStatus> ratios;
    bool any_failed() const;
    bool any_pending() const;
};

struct RunOptions {
    /// Last per-ratio stage to execute.
    std::string until = "report";
    std::function<void(const std::string&)> log;
};

/// Creates a fresh store at cfg.output and runs every ratio. Throws
/// StoreError if the directory already holds results.
RunStatus run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

/// Continues a store. When `edited` is given its hash must match the stored
/// configuration, otherwise ConfigError lists the changed keys.
RunStatus resume_experiment(const std::filesystem::path& store_root, const std::optional<ExperimentConfig>& edited,
                            const RunOptions& options = {});

ExperimentConfig stored_config(const std::filesystem::path& store_root);

/// Writes tables/ (CSV and markdown) from the stored artifacts.
void render_tables(const std::filesystem::path& store_root);

} // namespace xbias::experiment
