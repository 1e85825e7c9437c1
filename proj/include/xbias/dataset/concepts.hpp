#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xbias/core/image.hpp"

namespace xbias::dataset {

/// Example images for one concept and its counterpart. `attribute` and
/// `instance` are empty for concepts unrelated to a declared attribute.
struct ConceptSet {
    std::string name;
    std::string attribute;
    std::string instance;
    std::vector<Image> positives;
    std::vector<Image> negatives;
    std::string provenance;
    /// Optional declared attribute make-up of the examples, e.g.
    /// {"band_color": {"green": 51, "yellow": 49}}, for confound audits.
    nlohmann::json composition = nlohmann::json::object();

    void validate() const;
};

/// Layout: <root>/descriptor.json plus <root>/<name>/{positives,negatives}/NNNN.png.
void write_concepts(const std::filesystem::path& root, const std::vector<ConceptSet>& concepts);
std::vector<ConceptSet> read_concepts(const std::filesystem::path& root);

} // namespace xbias::dataset
