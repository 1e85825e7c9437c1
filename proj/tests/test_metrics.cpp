#include <gtest/gtest.h>

#include <random>

#include "reference_tables.hpp"
#include "xbias/core/error.hpp"
#include "xbias/core/rounding.hpp"
#include "xbias/metrics/metrics.hpp"

using namespace xbias;
using namespace xbias::metrics;

namespace {

double r1(const std::optional<double>& v) {
    EXPECT_TRUE(v.has_value());
    return round_half_up(v.value_or(-1), 1);
}

BiasCountTable swap_instances(BiasCountTable t) {
    for (auto& row : t.cells) std::swap(row[0], row[1]);
    std::swap(t.instances[0], t.instances[1]);
    return t;
}

SubgroupAccuracyTable swap_instances(SubgroupAccuracyTable t) {
    for (int c = 0; c < 2; ++c) {
        std::swap(t.accuracy[c][0], t.accuracy[c][1]);
        std::swap(t.tested[c][0], t.tested[c][1]);
        std::swap(t.weights[c][0], t.weights[c][1]);
    }
    std::swap(t.instances[0], t.instances[1]);
    return t;
}

BiasCountTable random_counts(std::mt19937_64& rng) {
    BiasCountTable t;
    t.attribute = "a";
    for (auto& row : t.cells) {
        for (auto& cell : row) {
            cell.examined = std::uniform_int_distribution<long>(1, 60)(rng);
            cell.bias = std::uniform_int_distribution<long>(0, cell.examined)(rng);
            cell.incorrect_bias = std::uniform_int_distribution<long>(0, cell.bias)(rng);
        }
    }
    return t;
}

} // namespace

TEST(Unfairness, ReproducesPrintedColumnExceptBalancedRow) {
    for (const auto& row : reference::kAccuracy) {
        const auto acc = reference::accuracy_table(row);
        const auto& m = *std::find_if(reference::kMetrics.begin(), reference::kMetrics.end(),
                                      [&](const auto& x) { return std::string(x.ratio) == row.ratio; });
        const double expected =
            std::string(row.ratio) == "1:1" ? reference::kUnfairness11Computed : m.unfairness_printed;
        EXPECT_DOUBLE_EQ(r1(unfairness(acc)), expected) << row.ratio;
    }
}

TEST(Unfairness, HandArithmetic) {
    const auto acc = reference::accuracy_table(reference::kAccuracy[4]);
    EXPECT_NEAR(*unfairness(acc), (19.3 + 32.4) / 2, 1e-9);
    EXPECT_NEAR(*unfairness(reference::accuracy_table(reference::kAccuracy[1])), (4.9 + 2.5) / 2, 1e-9);
}

TEST(Unfairness, ZeroOnIdenticalAccuracies) {
    SubgroupAccuracyTable t;
    for (auto& row : t.accuracy) row = {71.0, 71.0};
    EXPECT_EQ(*unfairness(t), 0.0);
}

TEST(Unfairness, MissingCellIsUndefined) {
    auto t = reference::accuracy_table(reference::kAccuracy[0]);
    t.accuracy[1][1].reset();
    EXPECT_FALSE(unfairness(t).has_value());
    EXPECT_FALSE(t.avg().has_value());
    EXPECT_FALSE(t.w_bias().has_value());
}

TEST(Aggregates, AvgAndWeightedBias) {
    for (const auto& row : reference::kAccuracy) {
        const auto acc = reference::accuracy_table(row);
        EXPECT_DOUBLE_EQ(r1(acc.avg()), row.avg) << row.ratio;
        EXPECT_DOUBLE_EQ(r1(acc.w_bias()), row.w_bias) << row.ratio;
    }
}

TEST(Aggregates, HalfUpAtRepresentationEdge) {
    const auto acc = reference::accuracy_table(reference::kAccuracy[2]);
    EXPECT_NEAR(*acc.avg(), 77.75, 1e-9);
    EXPECT_EQ(format_1dp(*acc.avg()), "77.8");
}

TEST(Aggregates, WeightedBiasHandArithmetic) {
    const auto acc = reference::accuracy_table(reference::kAccuracy[1]);
    EXPECT_NEAR(*acc.w_bias(), (0.75 * 77.8 + 0.25 * 72.9 + 0.75 * 79.1 + 0.25 * 76.6) / 2, 1e-9);
    EXPECT_NEAR(*reference::accuracy_table(reference::kAccuracy[0]).w_bias(), (81.0 + 77.5) / 2, 1e-9);
}

TEST(Metric1And2, ReferenceRows) {
    for (std::size_t k = 0; k < 5; ++k) {
        const std::string ratio = reference::kCounts[k].ratio;
        const auto counts = reference::count_table(reference::kCounts[k]);
        const double m1 = ratio == "3:1" ? reference::kM1Of31FromCells : reference::kMetrics[k].m1;
        EXPECT_DOUBLE_EQ(r1(metric1(counts)), m1) << ratio;
        EXPECT_DOUBLE_EQ(r1(metric2(counts)), reference::kMetrics[k].m2) << ratio;
        const auto total = counts.total();
        EXPECT_EQ(total.bias, reference::kCounts[k].sum[1]);
        EXPECT_EQ(total.examined, 200);
        if (ratio != "3:1") EXPECT_EQ(total.incorrect_bias, reference::kCounts[k].sum[0]);
    }
}

TEST(Metric1And2, SumColumnTotals) {
    for (std::size_t k = 0; k < 5; ++k) {
        BiasCountTable totals;
        totals.cells[0][0] = {4 * reference::kExaminedPerSubgroup, reference::kCounts[k].sum[1],
                              reference::kCounts[k].sum[0]};
        EXPECT_DOUBLE_EQ(r1(metric1(totals)), reference::kMetrics[k].m1) << reference::kCounts[k].ratio;
        EXPECT_DOUBLE_EQ(r1(metric2(totals)), reference::kMetrics[k].m2) << reference::kCounts[k].ratio;
    }
}

TEST(Metric3, ReferenceRows) {
    for (std::size_t k = 0; k < 5; ++k) {
        const auto counts = reference::count_table(reference::kCounts[k]);
        EXPECT_DOUBLE_EQ(r1(metric3(counts)), reference::kMetrics[k].m3) << reference::kCounts[k].ratio;
    }
    const auto counts = reference::count_table(reference::kCounts[0]);
    EXPECT_NEAR(*metric3(counts), (100.0 * (7.0 / 8 - 3.0 / 10) + 100.0 * (8.0 / 11 - 1.0 / 9)) / 2, 1e-9);
}

TEST(Metric3, ZeroBiasCellIsUndefined) {
    auto counts = reference::count_table(reference::kCounts[0]);
    counts.cells[1][0] = {50, 0, 0};
    EXPECT_FALSE(metric3(counts).has_value());
    EXPECT_TRUE(metric1(counts).has_value());
}

TEST(Metric3, EqualConditionalErrorsGiveZero) {
    BiasCountTable t;
    t.cells[0][0] = {50, 10, 2};
    t.cells[0][1] = {50, 5, 1};
    t.cells[1][0] = {50, 4, 3};
    t.cells[1][1] = {50, 8, 6};
    EXPECT_EQ(*metric3(t), 0.0);
}

TEST(Metric12, EdgeCases) {
    BiasCountTable empty;
    EXPECT_FALSE(metric1(empty).has_value());
    EXPECT_FALSE(metric2(empty).has_value());
    BiasCountTable zero;
    for (auto& row : zero.cells) row = {BiasCell{50, 0, 0}, BiasCell{50, 0, 0}};
    EXPECT_EQ(*metric1(zero), 0.0);
    EXPECT_EQ(*metric2(zero), 0.0);
}

TEST(Metric4, ReferenceRows) {
    for (const auto& row : reference::kConcepts) {
        EXPECT_DOUBLE_EQ(r1(metric4(reference::concept_table(row))), row.m4) << row.ratio;
    }
    ConceptScoreTable equal;
    for (auto& r : equal.score) r = {70.0, 70.0};
    EXPECT_EQ(*metric4(equal), 0.0);
    equal.score[0][1].reset();
    EXPECT_FALSE(metric4(equal).has_value());
}

TEST(CountTable, RejectsInconsistentCells) {
    BiasCountTable t;
    t.cells[0][0] = {5, 3, 4};
    EXPECT_THROW(t.validate(), ValidationError);
    EXPECT_THROW(metric1(t), ValidationError);
    t.cells[0][0] = {5, 6, 0};
    EXPECT_THROW(t.validate(), ValidationError);
}

TEST(MetricProperties, RandomTablesRespectBoundsAndSymmetry) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 500; ++trial) {
        const auto t = random_counts(rng);
        const double m1 = *metric1(t), m2 = *metric2(t);
        EXPECT_LE(m1, m2);
        EXPECT_GE(m1, 0.0);
        EXPECT_LE(m2, 100.0);
        const auto s = swap_instances(t);
        EXPECT_DOUBLE_EQ(*metric1(s), m1);
        EXPECT_DOUBLE_EQ(*metric2(s), m2);
        const auto m3 = metric3(t);
        const auto m3s = metric3(s);
        ASSERT_EQ(m3.has_value(), m3s.has_value());
        if (m3) {
            EXPECT_DOUBLE_EQ(*m3, *m3s);
            EXPECT_GE(*m3, 0.0);
            EXPECT_LE(*m3, 100.0);
        }
    }
}

TEST(MetricProperties, UnfairnessSymmetricAndZeroWhenBalanced) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 100);
    for (int trial = 0; trial < 200; ++trial) {
        SubgroupAccuracyTable t;
        for (auto& row : t.accuracy) row = {u(rng), u(rng)};
        EXPECT_DOUBLE_EQ(*unfairness(t), *unfairness(swap_instances(t)));
        for (auto& row : t.accuracy) row[1] = row[0];
        EXPECT_EQ(*unfairness(t), 0.0);
    }
}

TEST(Report, ReferenceRowOne) {
    const auto acc = reference::accuracy_table(reference::kAccuracy[0]);
    const auto counts = reference::count_table(reference::kCounts[0]);
    const auto r = build_report("1:0", acc, &counts, nullptr, {{"tau", 0.5}});
    EXPECT_EQ(report_csv_row(r), "1:0,19.4,9.5,19.0,59.6,");
    const auto j = to_json(r);
    EXPECT_EQ(j["M3"], 59.6);
    EXPECT_TRUE(j["M4"].is_null());
    EXPECT_EQ(j["parameters"]["tau"], 0.5);
    EXPECT_EQ(report_csv_header(), "ratio,unfairness,M1,M2,M3,M4");
}

TEST(Report, EmptyCountsLeaveUnfairnessOnly) {
    const auto acc = reference::accuracy_table(reference::kAccuracy[0]);
    BiasCountTable counts;
    counts.attribute = "gender";
    counts.composition_label = "1:0";
    const auto r = build_report("1:0", acc, &counts, nullptr);
    EXPECT_TRUE(r.unfairness.has_value());
    EXPECT_FALSE(r.m1 || r.m2 || r.m3 || r.m4);
}

TEST(Report, OrderOfSubgroupsDoesNotMatter) {
    const auto acc = reference::accuracy_table(reference::kAccuracy[3]);
    const auto counts = reference::count_table(reference::kCounts[3]);
    const auto a = build_report("1:3", acc, &counts, nullptr);
    const auto sa = swap_instances(acc);
    const auto sc = swap_instances(counts);
    const auto b = build_report("1:3", sa, &sc, nullptr);
    EXPECT_EQ(report_csv_row(a), report_csv_row(b));
}

TEST(Report, MismatchedCompositionIsRejected) {
    const auto acc = reference::accuracy_table(reference::kAccuracy[0]);
    const auto counts = reference::count_table(reference::kCounts[2]);
    EXPECT_THROW(build_report("1:0", acc, &counts, nullptr), ValidationError);
}

TEST(Report, ToleranceFlag) {
    const auto acc = reference::accuracy_table(reference::kAccuracy[0]);
    EXPECT_TRUE(build_report("1:0", acc, nullptr, nullptr, {}, 10.0).exceeds_tolerance);
    EXPECT_FALSE(build_report("1:0", acc, nullptr, nullptr, {}, 20.0).exceeds_tolerance);
    EXPECT_FALSE(build_report("1:0", acc, nullptr, nullptr).exceeds_tolerance);
}

TEST(Report, JsonRoundTripKeepsRawValues) {
    const auto acc = reference::accuracy_table(reference::kAccuracy[1]);
    const auto counts = reference::count_table(reference::kCounts[1]);
    const auto tc = reference::concept_table(reference::kConcepts[1]);
    const auto r = build_report("3:1", acc, &counts, &tc, {{"k", 1}}, 3.0);
    const auto back = report_from_json(to_json(r));
    EXPECT_EQ(back.unfairness, r.unfairness);
    EXPECT_EQ(back.m3, r.m3);
    EXPECT_EQ(back.m4, r.m4);
    EXPECT_EQ(back.tolerance, r.tolerance);
    EXPECT_EQ(back.exceeds_tolerance, r.exceeds_tolerance);
}

TEST(Tables, JsonRoundTrip) {
    const auto acc = reference::accuracy_table(reference::kAccuracy[1]);
    const auto a2 = accuracy_table_from_json(to_json(acc));
    EXPECT_EQ(a2.accuracy, acc.accuracy);
    EXPECT_EQ(a2.weights, acc.weights);
    EXPECT_EQ(a2.composition_label, "3:1");
    const auto counts = reference::count_table(reference::kCounts[4]);
    EXPECT_EQ(count_table_from_json(to_json(counts)), counts);
    const auto tc = reference::concept_table(reference::kConcepts[4]);
    EXPECT_EQ(concept_table_from_json(to_json(tc)).score, tc.score);
}

TEST(Rounding, HalfUpOneDecimal) {
    EXPECT_EQ(format_1dp(0.05), "0.1");
    EXPECT_EQ(format_1dp(19.35), "19.4");
    EXPECT_EQ(format_1dp(2.0), "2.0");
    EXPECT_EQ(format_1dp(std::optional<double>{}, "-"), "-");
    EXPECT_DOUBLE_EQ(round_half_up(59.55, 1), 59.6);
    EXPECT_DOUBLE_EQ(round_half_up(-1.25, 1), -1.3);
}
