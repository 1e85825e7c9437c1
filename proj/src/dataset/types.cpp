#include "xbias/dataset/types.hpp"

#include "xbias/core/error.hpp"

namespace xbias::dataset {

int AttributeSpec::instance_index(std::string_view label) const noexcept {
    if (label == instances[0]) return 0;
    if (label == instances[1]) return 1;
    return -1;
}

void AttributeSpec::validate() const {
    if (name.empty()) throw ValidationError("attribute with empty name");
    if (instances[0].empty() || instances[1].empty() || instances[0] == instances[1]) {
        throw ValidationError("attribute '" + name + "' needs two distinct instance labels");
    }
    if (feature_list.empty()) {
        throw ValidationError("attribute '" + name + "' has an empty feature list");
    }
}

const AttributeSpec& Dataset::attribute(std::string_view name) const {
    return attributes[attribute_position(name)];
}

std::size_t Dataset::attribute_position(std::string_view name) const {
    for (std::size_t i = 0; i < attributes.size(); ++i) {
        if (attributes[i].name == name) return i;
    }
    throw ConfigError("unknown attribute '" + std::string(name) + "'");
}

SubgroupKey Dataset::subgroup_of(const SampleRecord& s) const {
    SubgroupKey key;
    key.class_label = s.class_label;
    key.instances.reserve(attributes.size());
    for (const auto& attr : attributes) {
        auto it = s.attributes.find(attr.name);
        const int idx = it == s.attributes.end() ? -1 : attr.instance_index(it->second);
        if (idx < 0) throw ValidationError("sample lacks a valid value for '" + attr.name + "'", {s.id});
        key.instances.push_back(idx);
    }
    return key;
}

std::string Dataset::subgroup_label(const SubgroupKey& key) const {
    std::string out = class_names[key.class_label];
    for (std::size_t i = 0; i < attributes.size() && i < key.instances.size(); ++i) {
        out += "|" + attributes[i].name + "=" + attributes[i].instances[key.instances[i]];
    }
    return out;
}

std::vector<SubgroupKey> Dataset::all_subgroups() const {
    std::vector<SubgroupKey> out;
    const std::size_t k = attributes.size();
    for (int c = 0; c < 2; ++c) {
        for (std::size_t bits = 0; bits < (std::size_t{1} << k); ++bits) {
            SubgroupKey key{c, {}};
            for (std::size_t a = 0; a < k; ++a) key.instances.push_back(static_cast<int>((bits >> (k - 1 - a)) & 1U));
            out.push_back(std::move(key));
        }
    }
    return out;
}

std::map<SubgroupKey, std::size_t> Dataset::subgroup_counts() const {
    std::map<SubgroupKey, std::size_t> counts;
    for (auto& key : all_subgroups()) counts[key] = 0;
    for (const auto& s : samples) ++counts[subgroup_of(s)];
    return counts;
}

const SampleRecord& Dataset::sample(std::string_view id) const { return samples[index_of(id)]; }

std::size_t Dataset::index_of(std::string_view id) const {
    if (index_.size() == samples.size()) {
        auto it = index_.find(id);
        if (it != index_.end()) return it->second;
    } else {
        // stale index: fall back to a scan rather than mutating shared state
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (samples[i].id == id) return i;
        }
    }
    throw ValidationError("unknown sample id '" + std::string(id) + "'", {std::string(id)});
}

void Dataset::reindex() {
    index_.clear();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!index_.emplace(samples[i].id, i).second) {
            throw ValidationError("duplicate sample id '" + samples[i].id + "'", {samples[i].id});
        }
    }
}

} // namespace xbias::dataset
