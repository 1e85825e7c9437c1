#include "xbias/dataset/compose.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "xbias/core/seed.hpp"

namespace xbias::dataset {

Ratio Ratio::parse(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) throw ConfigError("ratio '" + std::string(text) + "' is not of the form A:B");
    auto number = [&](std::string_view part) {
        double v = 0;
        auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (ec != std::errc{} || ptr != part.data() + part.size() || !(v >= 0) || !std::isfinite(v)) {
            throw ConfigError("ratio '" + std::string(text) + "' has an invalid component");
        }
        return v;
    };
    Ratio r{number(text.substr(0, colon)), number(text.substr(colon + 1)), std::string(text)};
    if (r.a + r.b <= 0) throw ConfigError("ratio '" + std::string(text) + "' has zero total");
    return r;
}

std::vector<Ratio> default_ratios() {
    return {Ratio::parse("1:0"), Ratio::parse("3:1"), Ratio::parse("1:1"), Ratio::parse("1:3"),
            Ratio::parse("0:1")};
}

double CompositionSpec::fraction(int class_label, int instance) const noexcept {
    const double fa = ratio.fraction_a();
    const bool favours_a = (class_label == 0) == (instance == 0);
    return favours_a ? fa : 1.0 - fa;
}

std::vector<long> largest_remainder(std::span<const double> weights, long total) {
    const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<long> out(weights.size(), 0);
    if (weights.empty() || total <= 0 || sum <= 0) return out;
    std::vector<double> rem(weights.size());
    long assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = weights[i] / sum * static_cast<double>(total);
        // snap values within rounding noise of an integer
        const double snapped = std::abs(exact - std::round(exact)) < 1e-9 ? std::round(exact) : exact;
        out[i] = static_cast<long>(std::floor(snapped));
        rem[i] = snapped - static_cast<double>(out[i]);
        assigned += out[i];
    }
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (long k = 0; k < total - assigned; ++k) ++out[order[static_cast<std::size_t>(k) % order.size()]];
    return out;
}

TestReservation reserve_test_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0 && test_fraction < 1)) throw ConfigError("test fraction must be in (0, 1)");
    std::map<SubgroupKey, std::vector<std::string>> members;
    for (const auto& key : ds.all_subgroups()) members[key];
    for (const auto& s : ds.samples) members[ds.subgroup_of(s)].push_back(s.id);

    std::size_t smallest = SIZE_MAX;
    for (const auto& [key, ids] : members) smallest = std::min(smallest, ids.size());
    if (smallest == 0) {
        for (const auto& [key, ids] : members) {
            if (ids.empty()) throw CompositionError("subgroup " + ds.subgroup_label(key) + " is empty");
        }
    }

    TestReservation r;
    r.per_subgroup = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(test_fraction * smallest)));
    for (auto& [key, ids] : members) {
        std::vector<std::pair<std::uint64_t, std::string>> ranked;
        for (auto& id : ids) ranked.emplace_back(item_priority(seed, id), id);
        std::sort(ranked.begin(), ranked.end());
        auto& pool = r.pool[key];
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            if (i < r.per_subgroup) r.test_ids.push_back(ranked[i].second);
            else pool.push_back(ranked[i].second);
        }
        std::sort(pool.begin(), pool.end());
    }
    std::sort(r.test_ids.begin(), r.test_ids.end());
    return r;
}

namespace {

/// Picks `n` ids from the pool by seeded priority, independent of labels.
void take(const std::vector<std::string>& pool, long n, std::uint64_t seed, std::vector<std::string>& out) {
    std::vector<std::pair<std::uint64_t, const std::string*>> ranked;
    ranked.reserve(pool.size());
    for (const auto& id : pool) ranked.emplace_back(item_priority(seed, id), &id);
    std::sort(ranked.begin(), ranked.end(),
              [](const auto& x, const auto& y) { return x.first != y.first ? x.first < y.first : *x.second < *y.second; });
    for (long i = 0; i < n; ++i) out.push_back(*ranked[static_cast<std::size_t>(i)].second);
}

Split materialise(const Dataset& ds, const TestReservation& reserved, std::map<SubgroupKey, long> counts,
                  std::string label, std::uint64_t seed) {
    std::vector<std::string> shortfalls;
    for (const auto& [key, n] : counts) {
        auto it = reserved.pool.find(key);
        const long have = it == reserved.pool.end() ? 0 : static_cast<long>(it->second.size());
        if (n > have) {
            shortfalls.push_back(fmt::format("{} needs {} but has {} (short by {})", ds.subgroup_label(key), n,
                                             have, n - have));
        }
    }
    if (!shortfalls.empty()) {
        std::string msg = "insufficient training samples:";
        for (auto& s : shortfalls) msg += "\n  " + s;
        throw CompositionError(msg);
    }
    Split split;
    for (const auto& [key, n] : counts) take(reserved.pool.at(key), n, seed, split.train_ids);
    std::sort(split.train_ids.begin(), split.train_ids.end());
    split.test_ids = reserved.test_ids;
    split.composition_label = std::move(label);
    split.train_counts = std::move(counts);
    return split;
}

std::vector<SubgroupKey> class_cells(const Dataset& ds, int class_label) {
    std::vector<SubgroupKey> out;
    for (auto& key : ds.all_subgroups()) {
        if (key.class_label == class_label) out.push_back(std::move(key));
    }
    return out;
}

} // namespace

Split compose_split(const Dataset& ds, const TestReservation& reserved, const CompositionSpec& composition,
                    long class_train_size, std::uint64_t seed) {
    if (class_train_size < 1) throw ConfigError("class_train_size must be >= 1");
    const std::size_t pos = ds.attribute_position(composition.attribute);
    std::map<SubgroupKey, long> counts;
    for (int c = 0; c < 2; ++c) {
        const std::array<double, 2> f{composition.fraction(c, 0), composition.fraction(c, 1)};
        const auto per_instance = largest_remainder(f, class_train_size);
        for (int inst = 0; inst < 2; ++inst) {
            // other attributes held balanced within the instance
            std::vector<SubgroupKey> cells;
            for (auto& key : class_cells(ds, c)) {
                if (key.instances[pos] == inst) cells.push_back(key);
            }
            const std::vector<double> equal(cells.size(), 1.0);
            const auto share = largest_remainder(equal, per_instance[inst]);
            for (std::size_t i = 0; i < cells.size(); ++i) counts[cells[i]] = share[i];
        }
    }
    return materialise(ds, reserved, std::move(counts), composition.attribute + "@" + composition.ratio.label, seed);
}

Split compose_split(const Dataset& ds, const CompositionSpec& composition, long class_train_size,
                    std::uint64_t seed, double test_fraction) {
    const auto reserved = reserve_test_split(ds, test_fraction, seed);
    return compose_split(ds, reserved, composition, class_train_size, seed);
}

Split compose_joint_split(const Dataset& ds, const TestReservation& reserved,
                          const std::vector<CompositionSpec>& compositions, long class_train_size,
                          std::uint64_t seed) {
    if (ds.attributes.size() < 2) throw ConfigError("joint composition needs at least two attributes");
    if (compositions.empty()) throw ConfigError("joint composition needs at least one attribute ratio");
    if (class_train_size < 1) throw ConfigError("class_train_size must be >= 1");
    for (const auto& [key, ids] : reserved.pool) {
        if (ids.empty()) throw CompositionError("joint subgroup " + ds.subgroup_label(key) + " is not populated");
    }

    std::vector<const CompositionSpec*> by_position(ds.attributes.size(), nullptr);
    std::string label;
    for (const auto& comp : compositions) {
        const std::size_t pos = ds.attribute_position(comp.attribute);
        if (by_position[pos]) throw ConfigError("attribute '" + comp.attribute + "' composed twice");
        by_position[pos] = &comp;
        label += (label.empty() ? "" : "+") + comp.attribute + "@" + comp.ratio.label;
    }

    auto allocate = [&](long size) {
        std::map<SubgroupKey, long> counts;
        for (int c = 0; c < 2; ++c) {
            const auto cells = class_cells(ds, c);
            std::vector<double> weights;
            for (const auto& key : cells) {
                double w = 1.0;
                for (std::size_t a = 0; a < key.instances.size(); ++a) {
                    w *= by_position[a] ? by_position[a]->fraction(c, key.instances[a]) : 0.5;
                }
                weights.push_back(w);
            }
            const auto share = largest_remainder(weights, size);
            for (std::size_t i = 0; i < cells.size(); ++i) counts[cells[i]] = share[i];
        }
        return counts;
    };
    auto fits = [&](const std::map<SubgroupKey, long>& counts) {
        for (const auto& [key, n] : counts) {
            if (n > static_cast<long>(reserved.pool.at(key).size())) return false;
        }
        return true;
    };

    auto counts = allocate(class_train_size);
    if (!fits(counts)) {
        long feasible = class_train_size - 1;
        while (feasible > 0 && !fits(allocate(feasible))) --feasible;
        std::string msg = fmt::format("joint composition {} is infeasible for class_train_size {}", label,
                                      class_train_size);
        if (feasible > 0) {
            msg += fmt::format("; closest feasible class_train_size is {} with allocation:", feasible);
            for (const auto& [key, n] : allocate(feasible)) msg += fmt::format("\n  {}: {}", ds.subgroup_label(key), n);
        }
        throw CompositionError(msg);
    }

    // marginal check, +-1 sample per attribute instance and class
    for (std::size_t a = 0; a < ds.attributes.size(); ++a) {
        if (!by_position[a]) continue;
        for (int c = 0; c < 2; ++c) {
            for (int inst = 0; inst < 2; ++inst) {
                long got = 0;
                for (const auto& [key, n] : counts) {
                    if (key.class_label == c && key.instances[a] == inst) got += n;
                }
                const double want = by_position[a]->fraction(c, inst) * static_cast<double>(class_train_size);
                if (std::abs(static_cast<double>(got) - want) > 1.0 + 1e-9) {
                    throw CompositionError(fmt::format("marginal of {}={} in class {} is {} (target {:.2f})",
                                                       ds.attributes[a].name, ds.attributes[a].instances[inst],
                                                       ds.class_names[c], got, want));
                }
            }
        }
    }
    return materialise(ds, reserved, std::move(counts), label, seed);
}

} // namespace xbias::dataset
