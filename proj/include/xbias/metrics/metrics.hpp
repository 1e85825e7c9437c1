#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "xbias/metrics/types.hpp"

namespace xbias::metrics {

/// Mean over classes of |acc(c, A) - acc(c, B)|: the equal-opportunity
/// style group-fairness gap.
std::optional<double> unfairness(const SubgroupAccuracyTable& acc);

/// Percentage of examined explanations that are both biased and attached to
/// an incorrect prediction.
std::optional<double> metric1(const BiasCountTable& counts);

/// Percentage of examined explanations judged biased.
std::optional<double> metric2(const BiasCountTable& counts);

/// Mean over classes of the gap between the instances' error rates among
/// biased explanations. Undefined when any cell has no biased explanation.
std::optional<double> metric3(const BiasCountTable& counts);

/// Mean over classes of |score(c, A) - score(c, B)| for concept TCAV scores.
std::optional<double> metric4(const ConceptScoreTable& scores);

struct MetricsReport {
    std::string ratio;
    std::string attribute;
    std::optional<double> unfairness;
    std::optional<double> m1, m2, m3, m4;
    nlohmann::json parameters = nlohmann::json::object();
    /// Set when unfairness exceeds the attribute's configured tolerance.
    std::optional<double> tolerance;
    bool exceeds_tolerance = false;
};

/// Assembles one report; all inputs must carry the same attribute and
/// composition label. Values are stored unrounded; rendering rounds half-up
/// to one decimal.
MetricsReport build_report(const std::string& ratio, const SubgroupAccuracyTable& acc,
                           const BiasCountTable* counts, const ConceptScoreTable* tcav,
                           nlohmann::json parameters = nlohmann::json::object(),
                           std::optional<double> tolerance = std::nullopt);

/// One-decimal rendering of a report, nulls for undefined metrics.
nlohmann::json to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);

/// Fixed column order: ratio, unfairness, M1, M2, M3, M4.
std::string report_csv_header();
std::string report_csv_row(const MetricsReport& r);

} // namespace xbias::metrics
