#pragma once

#include <array>
#include <string>

#include "xbias/metrics/types.hpp"

// Doctor/nurse study with gender as the attribute (A = male, B = female).
// Cells are listed D_M, D_F, N_M, N_F.
namespace reference {

struct AccuracyRow {
    const char* ratio;
    std::array<double, 4> cells;
    double avg;
    double w_bias;
};

inline constexpr std::array<AccuracyRow, 5> kAccuracy{{
    {"1:0", {81.0, 62.8, 57.0, 77.5}, 69.6, 79.3},
    {"3:1", {77.8, 72.9, 76.6, 79.1}, 76.6, 77.5},
    {"1:1", {79.4, 82.2, 77.3, 72.1}, 77.8, 77.8},
    {"1:3", {71.4, 77.5, 84.4, 72.1}, 76.4, 78.7},
    {"0:1", {66.7, 86.0, 85.9, 53.5}, 73.0, 86.0},
}};

struct CountRow {
    const char* ratio;
    // {incorrect with bias, bias} per cell
    std::array<std::array<long, 2>, 4> cells;
    std::array<long, 2> sum;
};

inline constexpr std::array<CountRow, 5> kCounts{{
    {"1:0", {{{3, 10}, {7, 8}, {8, 11}, {1, 9}}}, {19, 38}},
    {"3:1", {{{3, 9}, {5, 9}, {2, 11}, {1, 11}}}, {13, 40}},
    {"1:1", {{{1, 8}, {1, 6}, {3, 8}, {2, 10}}}, {7, 32}},
    {"1:3", {{{2, 8}, {0, 6}, {3, 9}, {3, 13}}}, {8, 36}},
    {"0:1", {{{2, 6}, {1, 7}, {2, 13}, {9, 12}}}, {14, 38}},
}};

inline constexpr long kExaminedPerSubgroup = 50;

// The 3:1 cells add up to 11 incorrect-with-bias while its Sum column says 13;
// the printed M1 of that row (6.5) follows the Sum column.
inline constexpr double kM1Of31FromCells = 5.5;

struct MetricRow {
    const char* ratio;
    double unfairness_printed;
    double m1, m2, m3;
};

inline constexpr std::array<MetricRow, 5> kMetrics{{
    {"1:0", 19.4, 9.5, 19.0, 59.6},
    {"3:1", 3.7, 6.5, 20.0, 15.7},
    {"1:1", 2.0, 3.5, 16.0, 10.8},
    {"1:3", 9.2, 4.0, 18.0, 17.6},
    {"0:1", 25.9, 7.0, 19.0, 39.3},
}};

// The class-averaged gap of the 1:1 accuracy row is 4.0, not the printed 2.0.
inline constexpr double kUnfairness11Computed = 4.0;

struct ConceptRow {
    const char* ratio;
    std::array<double, 4> scores; // M_D, F_D, M_N, F_N
    double m4;
};

inline constexpr std::array<ConceptRow, 5> kConcepts{{
    {"1:0", {100, 54, 98, 56}, 44.0},
    {"3:1", {96, 57, 93, 57}, 37.5},
    {"1:1", {89, 82, 90, 84}, 6.5},
    {"1:3", {58, 91, 60, 92}, 32.5},
    {"0:1", {62, 94, 61, 98}, 34.5},
}};

inline double fraction_a(const std::string& ratio) {
    const auto colon = ratio.find(':');
    const double a = std::stod(ratio.substr(0, colon));
    const double b = std::stod(ratio.substr(colon + 1));
    return a / (a + b);
}

inline xbias::metrics::SubgroupAccuracyTable accuracy_table(const AccuracyRow& row) {
    xbias::metrics::SubgroupAccuracyTable t;
    t.attribute = "gender";
    t.class_names = {"doctor", "nurse"};
    t.instances = {"male", "female"};
    t.composition_label = row.ratio;
    const double fa = fraction_a(row.ratio);
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 2; ++i) {
            t.accuracy[c][i] = row.cells[c * 2 + i];
            t.tested[c][i] = 50;
        }
    }
    t.weights = {{{fa, 1 - fa}, {1 - fa, fa}}};
    return t;
}

inline xbias::metrics::BiasCountTable count_table(const CountRow& row) {
    xbias::metrics::BiasCountTable t;
    t.attribute = "gender";
    t.class_names = {"doctor", "nurse"};
    t.instances = {"male", "female"};
    t.composition_label = row.ratio;
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 2; ++i) {
            const auto& cell = row.cells[c * 2 + i];
            t.cells[c][i] = {kExaminedPerSubgroup, cell[1], cell[0]};
        }
    }
    return t;
}

inline xbias::metrics::ConceptScoreTable concept_table(const ConceptRow& row) {
    xbias::metrics::ConceptScoreTable t;
    t.attribute = "gender";
    t.class_names = {"doctor", "nurse"};
    t.instances = {"male", "female"};
    t.composition_label = row.ratio;
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 2; ++i) t.score[c][i] = row.scores[c * 2 + i];
    }
    return t;
}

} // namespace reference
