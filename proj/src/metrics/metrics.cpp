#include "xbias/metrics/metrics.hpp"

#include <cmath>

#include <fmt/format.h>

#include "xbias/core/error.hpp"
#include "xbias/core/rounding.hpp"

using nlohmann::json;

namespace xbias::metrics {

std::optional<double> unfairness(const SubgroupAccuracyTable& acc) {
    if (!acc.complete()) return std::nullopt;
    double sum = 0;
    for (int c = 0; c < 2; ++c) sum += std::fabs(*acc.accuracy[c][0] - *acc.accuracy[c][1]);
    return sum / 2.0;
}

std::optional<double> metric1(const BiasCountTable& counts) {
    counts.validate();
    const BiasCell t = counts.total();
    if (t.examined <= 0) return std::nullopt;
    return 100.0 * static_cast<double>(t.incorrect_bias) / static_cast<double>(t.examined);
}

std::optional<double> metric2(const BiasCountTable& counts) {
    counts.validate();
    const BiasCell t = counts.total();
    if (t.examined <= 0) return std::nullopt;
    return 100.0 * static_cast<double>(t.bias) / static_cast<double>(t.examined);
}

std::optional<double> metric3(const BiasCountTable& counts) {
    counts.validate();
    double sum = 0;
    for (int c = 0; c < 2; ++c) {
        const BiasCell& a = counts.cells[c][0];
        const BiasCell& b = counts.cells[c][1];
        if (a.bias == 0 || b.bias == 0) return std::nullopt;
        const double ra = 100.0 * static_cast<double>(a.incorrect_bias) / static_cast<double>(a.bias);
        const double rb = 100.0 * static_cast<double>(b.incorrect_bias) / static_cast<double>(b.bias);
        sum += std::fabs(ra - rb);
    }
    return sum / 2.0;
}

std::optional<double> metric4(const ConceptScoreTable& scores) {
    double sum = 0;
    for (int c = 0; c < 2; ++c) {
        if (!scores.score[c][0] || !scores.score[c][1]) return std::nullopt;
        sum += std::fabs(*scores.score[c][0] - *scores.score[c][1]);
    }
    return sum / 2.0;
}

MetricsReport build_report(const std::string& ratio, const SubgroupAccuracyTable& acc, const BiasCountTable* counts,
                           const ConceptScoreTable* tcav, json parameters, std::optional<double> tolerance) {
    auto check = [&](const std::string& what, const std::string& attribute, const std::string& composition) {
        if (attribute != acc.attribute || composition != acc.composition_label) {
            throw ValidationError(fmt::format("{} belongs to {}@{} but accuracy table is {}@{}", what, attribute,
                                              composition, acc.attribute, acc.composition_label));
        }
    };
    MetricsReport r;
    r.ratio = ratio;
    r.attribute = acc.attribute;
    r.unfairness = unfairness(acc);
    if (counts) {
        check("bias count table", counts->attribute, counts->composition_label);
        r.m1 = metric1(*counts);
        r.m2 = metric2(*counts);
        r.m3 = metric3(*counts);
    }
    if (tcav) {
        check("TCAV score table", tcav->attribute, tcav->composition_label);
        r.m4 = metric4(*tcav);
    }
    r.parameters = std::move(parameters);
    r.tolerance = tolerance;
    r.exceeds_tolerance = tolerance && r.unfairness && *r.unfairness > *tolerance;
    return r;
}

json to_json(const MetricsReport& r) {
    auto rounded = [](const std::optional<double>& v) { return v ? json(round_half_up(*v, 1)) : json(nullptr); };
    auto raw = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json j;
    j["ratio"] = r.ratio;
    j["attribute"] = r.attribute;
    j["unfairness"] = rounded(r.unfairness);
    j["M1"] = rounded(r.m1);
    j["M2"] = rounded(r.m2);
    j["M3"] = rounded(r.m3);
    j["M4"] = rounded(r.m4);
    j["raw"] = {{"unfairness", raw(r.unfairness)}, {"M1", raw(r.m1)}, {"M2", raw(r.m2)},
                {"M3", raw(r.m3)}, {"M4", raw(r.m4)}};
    json undefined = json::array();
    for (auto [name, v] : {std::pair{"unfairness", &r.unfairness}, std::pair{"M1", &r.m1}, std::pair{"M2", &r.m2},
                           std::pair{"M3", &r.m3}, std::pair{"M4", &r.m4}}) {
        if (!*v) undefined.push_back(name);
    }
    j["undefined"] = std::move(undefined);
    j["parameters"] = r.parameters;
    j["tolerance"] = raw(r.tolerance);
    j["exceeds_tolerance"] = r.exceeds_tolerance;
    return j;
}

MetricsReport report_from_json(const json& j) {
    auto raw = [&](const char* key) -> std::optional<double> {
        const auto& v = j.at("raw").at(key);
        if (v.is_null()) return std::nullopt;
        return v.get<double>();
    };
    MetricsReport r;
    r.ratio = j.at("ratio").get<std::string>();
    r.attribute = j.at("attribute").get<std::string>();
    r.unfairness = raw("unfairness");
    r.m1 = raw("M1");
    r.m2 = raw("M2");
    r.m3 = raw("M3");
    r.m4 = raw("M4");
    r.parameters = j.value("parameters", json::object());
    if (j.contains("tolerance") && !j.at("tolerance").is_null()) r.tolerance = j.at("tolerance").get<double>();
    r.exceeds_tolerance = j.value("exceeds_tolerance", false);
    return r;
}

std::string report_csv_header() { return "ratio,unfairness,M1,M2,M3,M4"; }

std::string report_csv_row(const MetricsReport& r) {
    auto cell = [](const std::optional<double>& v) { return format_1dp(v, ""); };
    return fmt::format("{},{},{},{},{},{}", r.ratio, cell(r.unfairness), cell(r.m1), cell(r.m2), cell(r.m3),
                       cell(r.m4));
}

} // namespace xbias::metrics
