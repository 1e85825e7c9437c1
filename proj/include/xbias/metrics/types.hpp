#pragma once

#include <array>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace xbias::metrics {

/// Cells are indexed [class][instance], instance 0 = A, 1 = B.
template <typename T>
using CellGrid = std::array<std::array<T, 2>, 2>;

/// Per-subgroup test accuracy (percent) for one binary attribute.
struct SubgroupAccuracyTable {
    std::string attribute;
    std::array<std::string, 2> class_names{"class0", "class1"};
    std::array<std::string, 2> instances{"A", "B"};
    std::string composition_label;
    CellGrid<std::optional<double>> accuracy{};
    CellGrid<long> tested{};
    /// Training fraction of each instance within its class.
    CellGrid<double> weights{{{0.5, 0.5}, {0.5, 0.5}}};

    bool complete() const noexcept;
    /// Unweighted mean of the four cells. Undefined if a cell is missing.
    std::optional<double> avg() const;
    /// Mean over classes of the composition-weighted cell accuracies, i.e.
    /// accuracy on a test set that carries the training bias.
    std::optional<double> w_bias() const;
};

struct BiasCell {
    long examined = 0;
    long bias = 0;           ///< explanations judged biased
    long incorrect_bias = 0; ///< judged biased and mispredicted

    friend bool operator==(const BiasCell&, const BiasCell&) = default;
};

/// Explanation verdict counts per (class, attribute instance).
struct BiasCountTable {
    std::string attribute;
    std::array<std::string, 2> class_names{"class0", "class1"};
    std::array<std::string, 2> instances{"A", "B"};
    std::string composition_label;
    CellGrid<BiasCell> cells{};

    /// Throws ValidationError unless 0 <= incorrect_bias <= bias <= examined.
    void validate() const;
    BiasCell total() const noexcept;

    friend bool operator==(const BiasCountTable&, const BiasCountTable&) = default;
};

/// TCAV scores (percent) of concept instance i for class c.
struct ConceptScoreTable {
    std::string attribute;
    std::array<std::string, 2> class_names{"class0", "class1"};
    std::array<std::string, 2> instances{"A", "B"};
    std::string composition_label;
    CellGrid<std::optional<double>> score{};
    CellGrid<std::optional<double>> p_value{};
    CellGrid<bool> significant{};
};

nlohmann::json to_json(const SubgroupAccuracyTable& t);
SubgroupAccuracyTable accuracy_table_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BiasCountTable& t);
BiasCountTable count_table_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ConceptScoreTable& t);
ConceptScoreTable concept_table_from_json(const nlohmann::json& j);

} // namespace xbias::metrics
