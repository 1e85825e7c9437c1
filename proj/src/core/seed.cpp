#include "xbias/core/seed.hpp"

namespace xbias {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t basis) noexcept {
    std::uint64_t h = basis;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view scope,
                          std::string_view stage) noexcept {
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ fnv1a(scope));
    // separator so ("ab", "") and ("a", "b") differ
    h = splitmix64(h ^ fnv1a(stage, 0x84222325cbf29ce4ULL));
    return h;
}

std::uint64_t item_priority(std::uint64_t seed, std::string_view item_id) noexcept {
    return splitmix64(splitmix64(seed) ^ fnv1a(item_id));
}

} // namespace xbias
