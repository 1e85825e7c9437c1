#pragma once

#include <cstdint>
#include <string_view>

namespace xbias {

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

/// Per-stage seed as a pure function of the master seed and a path of names,
/// e.g. derive_seed(master, "3:1", "train").
std::uint64_t derive_seed(std::uint64_t master, std::string_view scope,
                          std::string_view stage = {}) noexcept;

/// Stable pseudo-random priority of a named item under a seed. Used to pick
/// subsets independently of label order.
std::uint64_t item_priority(std::uint64_t seed, std::string_view item_id) noexcept;

} // namespace xbias
