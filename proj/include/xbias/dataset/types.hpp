#pragma once

#include <array>
#include <compare>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "xbias/core/image.hpp"

namespace xbias::dataset {

/// A binary sensitive attribute plus the expert checklist of image features
/// that would reveal it.
struct AttributeSpec {
    std::string name;
    std::array<std::string, 2> instances;
    std::vector<std::string> feature_list;

    /// 0 for instances[0], 1 for instances[1], -1 otherwise.
    int instance_index(std::string_view label) const noexcept;
    void validate() const;

    friend bool operator==(const AttributeSpec&, const AttributeSpec&) = default;
};

struct SampleRecord {
    std::string id;
    int class_label = 0;
    std::map<std::string, std::string> attributes;
    Image image;
    std::map<std::string, Mask> masks;

    // Paths relative to the dataset root; empty for in-memory samples.
    std::string image_path;
    std::map<std::string, std::string> mask_paths;

    bool has_masks() const noexcept { return !masks.empty(); }
};

/// Class label plus one instance index per attribute, in manifest attribute order.
struct SubgroupKey {
    int class_label = 0;
    std::vector<int> instances;

    auto operator<=>(const SubgroupKey&) const = default;
    bool operator==(const SubgroupKey&) const = default;
};

class Dataset {
public:
    std::vector<AttributeSpec> attributes;
    std::array<std::string, 2> class_names{"class0", "class1"};
    std::vector<SampleRecord> samples;

    const AttributeSpec& attribute(std::string_view name) const;
    std::size_t attribute_position(std::string_view name) const;

    SubgroupKey subgroup_of(const SampleRecord& s) const;
    /// Label like "cross|marker_color=red|band_color=green".
    std::string subgroup_label(const SubgroupKey& key) const;

    /// Counts for every one of the 2 x 2^k subgroups, including empty ones.
    std::map<SubgroupKey, std::size_t> subgroup_counts() const;
    std::vector<SubgroupKey> all_subgroups() const;

    const SampleRecord& sample(std::string_view id) const;
    std::size_t index_of(std::string_view id) const;

    /// Rebuilds the id -> index lookup; call after mutating `samples`.
    void reindex();

private:
    std::map<std::string, std::size_t, std::less<>> index_;
};

} // namespace xbias::dataset
