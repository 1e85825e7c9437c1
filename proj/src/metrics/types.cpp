#include "xbias/metrics/types.hpp"

#include <fmt/format.h>

#include "xbias/core/error.hpp"

using nlohmann::json;

namespace xbias::metrics {
namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

template <typename T, typename F>
json grid_json(const CellGrid<T>& g, F f) {
    return json::array({json::array({f(g[0][0]), f(g[0][1])}), json::array({f(g[1][0]), f(g[1][1])})});
}

template <typename T, typename F>
CellGrid<T> grid_from(const json& j, F f) {
    CellGrid<T> g{};
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 2; ++i) g[c][i] = f(j.at(c).at(i));
    }
    return g;
}

void header_to(json& j, const std::string& attribute, const std::array<std::string, 2>& classes,
               const std::array<std::string, 2>& instances, const std::string& composition) {
    j["attribute"] = attribute;
    j["class_names"] = classes;
    j["instances"] = instances;
    j["composition"] = composition;
}

template <typename T>
void header_from(const json& j, T& t) {
    t.attribute = j.at("attribute").get<std::string>();
    t.class_names = j.at("class_names").get<std::array<std::string, 2>>();
    t.instances = j.at("instances").get<std::array<std::string, 2>>();
    t.composition_label = j.value("composition", std::string{});
}

} // namespace

bool SubgroupAccuracyTable::complete() const noexcept {
    for (const auto& row : accuracy) {
        for (const auto& v : row) {
            if (!v) return false;
        }
    }
    return true;
}

std::optional<double> SubgroupAccuracyTable::avg() const {
    if (!complete()) return std::nullopt;
    return (*accuracy[0][0] + *accuracy[0][1] + *accuracy[1][0] + *accuracy[1][1]) / 4.0;
}

std::optional<double> SubgroupAccuracyTable::w_bias() const {
    if (!complete()) return std::nullopt;
    double sum = 0;
    for (int c = 0; c < 2; ++c) {
        sum += weights[c][0] * *accuracy[c][0] + weights[c][1] * *accuracy[c][1];
    }
    return sum / 2.0;
}

void BiasCountTable::validate() const {
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 2; ++i) {
            const BiasCell& cell = cells[c][i];
            if (cell.incorrect_bias < 0 || cell.incorrect_bias > cell.bias || cell.bias > cell.examined) {
                throw ValidationError(fmt::format(
                    "bias count cell ({}, {}) violates 0 <= incorrect_bias <= bias <= examined: {}/{}/{}",
                    class_names[c], instances[i], cell.incorrect_bias, cell.bias, cell.examined));
            }
        }
    }
}

BiasCell BiasCountTable::total() const noexcept {
    BiasCell t;
    for (const auto& row : cells) {
        for (const auto& cell : row) {
            t.examined += cell.examined;
            t.bias += cell.bias;
            t.incorrect_bias += cell.incorrect_bias;
        }
    }
    return t;
}

json to_json(const SubgroupAccuracyTable& t) {
    json j;
    header_to(j, t.attribute, t.class_names, t.instances, t.composition_label);
    j["accuracy"] = grid_json(t.accuracy, opt);
    j["tested"] = grid_json(t.tested, [](long v) { return json(v); });
    j["weights"] = grid_json(t.weights, [](double v) { return json(v); });
    return j;
}

SubgroupAccuracyTable accuracy_table_from_json(const json& j) {
    SubgroupAccuracyTable t;
    header_from(j, t);
    t.accuracy = grid_from<std::optional<double>>(j.at("accuracy"), opt_from);
    t.tested = grid_from<long>(j.at("tested"), [](const json& v) { return v.get<long>(); });
    t.weights = grid_from<double>(j.at("weights"), [](const json& v) { return v.get<double>(); });
    return t;
}

json to_json(const BiasCountTable& t) {
    json j;
    header_to(j, t.attribute, t.class_names, t.instances, t.composition_label);
    j["cells"] = grid_json(t.cells, [](const BiasCell& c) {
        return json{{"examined", c.examined}, {"bias", c.bias}, {"incorrect_bias", c.incorrect_bias}};
    });
    return j;
}

BiasCountTable count_table_from_json(const json& j) {
    BiasCountTable t;
    header_from(j, t);
    t.cells = grid_from<BiasCell>(j.at("cells"), [](const json& c) {
        return BiasCell{c.at("examined").get<long>(), c.at("bias").get<long>(), c.at("incorrect_bias").get<long>()};
    });
    t.validate();
    return t;
}

json to_json(const ConceptScoreTable& t) {
    json j;
    header_to(j, t.attribute, t.class_names, t.instances, t.composition_label);
    j["score"] = grid_json(t.score, opt);
    j["p_value"] = grid_json(t.p_value, opt);
    j["significant"] = grid_json(t.significant, [](bool b) { return json(b); });
    return j;
}

ConceptScoreTable concept_table_from_json(const json& j) {
    ConceptScoreTable t;
    header_from(j, t);
    t.score = grid_from<std::optional<double>>(j.at("score"), opt_from);
    t.p_value = grid_from<std::optional<double>>(j.at("p_value"), opt_from);
    t.significant = grid_from<bool>(j.at("significant"), [](const json& v) { return v.get<bool>(); });
    return t;
}

} // namespace xbias::metrics
