#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "xbias/core/error.hpp"
#include "xbias/dataset/types.hpp"

namespace xbias::dataset {

class CompositionError : public Error {
public:
    using Error::Error;
};

/// Attribute-instance ratio A:B, e.g. "3:1" or "0.6:0.4".
struct Ratio {
    double a = 1.0;
    double b = 1.0;
    std::string label = "1:1";

    static Ratio parse(std::string_view text);
    double fraction_a() const noexcept { return a / (a + b); }

    friend bool operator==(const Ratio&, const Ratio&) = default;
};

/// The five bias degrees swept by default: 1:0, 3:1, 1:1, 1:3, 0:1.
std::vector<Ratio> default_ratios();

/// Ratio A:B applies to class 0; class 1 uses the interchanged B:A.
struct CompositionSpec {
    std::string attribute;
    Ratio ratio;

    /// Training fraction of `instance` (0 = A, 1 = B) within `class_label`.
    double fraction(int class_label, int instance) const noexcept;
};

/// Largest-remainder apportionment of `total` over `weights` (which are
/// normalised internally). Ties in the remainder go to the lower index, so
/// the total is always preserved exactly.
std::vector<long> largest_remainder(std::span<const double> weights, long total);

/// Test samples set aside before any composition, shared by every ratio.
struct TestReservation {
    std::vector<std::string> test_ids;
    std::size_t per_subgroup = 0;
    /// Remaining samples per subgroup, available for training.
    std::map<SubgroupKey, std::vector<std::string>> pool;
};

/// Reserves floor(test_fraction * smallest subgroup) samples from every
/// subgroup, so the test split is balanced.
TestReservation reserve_test_split(const Dataset& ds, double test_fraction, std::uint64_t seed);

struct Split {
    std::vector<std::string> train_ids; ///< sorted
    std::vector<std::string> test_ids;  ///< sorted
    std::string composition_label;
    std::map<SubgroupKey, long> train_counts;
};

Split compose_split(const Dataset& ds, const TestReservation& reserved, const CompositionSpec& composition,
                    long class_train_size, std::uint64_t seed);

/// Convenience overload reserving a 25% test split with the same seed.
Split compose_split(const Dataset& ds, const CompositionSpec& composition, long class_train_size,
                    std::uint64_t seed, double test_fraction = 0.25);

/// Several attributes biased at once. Joint subgroup counts follow the
/// product of the per-attribute fractions, apportioned by largest remainder
/// over all joint cells of a class; attributes without a composition are
/// held at 1:1. Per-attribute marginals are checked to lie within one
/// sample of their targets.
Split compose_joint_split(const Dataset& ds, const TestReservation& reserved,
                          const std::vector<CompositionSpec>& compositions, long class_train_size,
                          std::uint64_t seed);

} // namespace xbias::dataset
