#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xbias/dataset/types.hpp"

namespace xbias::dataset {

struct ImportResult {
    Dataset dataset;
    std::vector<std::string> maskless_ids; ///< usable for training/TCAV, not for auto verdicts
    std::vector<std::string> warnings;
};

nlohmann::json manifest_to_json(const Dataset& ds);
/// Parses structure only; images and masks are not loaded.
Dataset manifest_from_json(const nlohmann::json& doc);

/// Writes images/, masks/ and manifest.json under `root`, assigning
/// relative paths to samples that have none. Returns the manifest path.
std::filesystem::path export_dataset(Dataset& ds, const std::filesystem::path& root);

/// Loads and validates a manifest and every referenced file. Throws
/// ValidationError listing all offending sample ids.
ImportResult import_dataset(const std::filesystem::path& root,
                            const std::filesystem::path& manifest_file);

/// Split id lists as {"train": [...], "test": [...]}.
void write_id_lists(const std::filesystem::path& path, const std::vector<std::string>& train,
                    const std::vector<std::string>& test);

std::string read_text_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename so readers never see partial files.
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace xbias::dataset
