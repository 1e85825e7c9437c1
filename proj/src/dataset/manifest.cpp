#include "xbias/dataset/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "xbias/core/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace xbias::dataset {

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << text;
        if (!out) throw Error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

json manifest_to_json(const Dataset& ds) {
    json doc;
    doc["class_names"] = {ds.class_names[0], ds.class_names[1]};
    json attrs = json::array();
    for (const auto& a : ds.attributes) {
        attrs.push_back({{"name", a.name},
                         {"instances", {a.instances[0], a.instances[1]}},
                         {"feature_list", a.feature_list}});
    }
    doc["attributes"] = std::move(attrs);
    json samples = json::array();
    for (const auto& s : ds.samples) {
        json j;
        j["id"] = s.id;
        j["class"] = s.class_label;
        j["attrs"] = s.attributes;
        j["image_path"] = s.image_path;
        j["mask_paths"] = s.mask_paths;
        samples.push_back(std::move(j));
    }
    doc["samples"] = std::move(samples);
    return doc;
}

Dataset manifest_from_json(const json& doc) {
    Dataset ds;
    try {
        const auto& names = doc.at("class_names");
        if (!names.is_array() || names.size() != 2) throw ValidationError("class_names must list exactly two classes");
        ds.class_names = {names[0].get<std::string>(), names[1].get<std::string>()};
        for (const auto& a : doc.at("attributes")) {
            AttributeSpec spec;
            spec.name = a.at("name").get<std::string>();
            const auto& inst = a.at("instances");
            if (!inst.is_array() || inst.size() != 2) {
                throw ValidationError("attribute '" + spec.name + "' must declare exactly two instances");
            }
            spec.instances = {inst[0].get<std::string>(), inst[1].get<std::string>()};
            spec.feature_list = a.at("feature_list").get<std::vector<std::string>>();
            spec.validate();
            ds.attributes.push_back(std::move(spec));
        }
        for (const auto& j : doc.at("samples")) {
            SampleRecord s;
            s.id = j.at("id").get<std::string>();
            s.class_label = j.at("class").get<int>();
            s.attributes = j.at("attrs").get<std::map<std::string, std::string>>();
            s.image_path = j.value("image_path", std::string{});
            if (j.contains("mask_paths")) s.mask_paths = j.at("mask_paths").get<std::map<std::string, std::string>>();
            ds.samples.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed manifest: ") + e.what());
    }
    return ds;
}

fs::path export_dataset(Dataset& ds, const fs::path& root) {
    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");
    for (auto& s : ds.samples) {
        if (s.image.empty()) throw Error("sample '" + s.id + "' has no pixel data to export");
        s.image_path = "images/" + s.id + ".png";
        write_png(root / s.image_path, s.image);
        s.mask_paths.clear();
        for (const auto& [feature, mask] : s.masks) {
            std::string rel = "masks/" + s.id + "__" + feature + ".png";
            write_mask_png(root / rel, mask);
            s.mask_paths[feature] = rel;
        }
    }
    fs::path manifest = root / "manifest.json";
    write_text_file(manifest, manifest_to_json(ds).dump(2) + "\n");
    return manifest;
}

ImportResult import_dataset(const fs::path& root, const fs::path& manifest_file) {
    json doc;
    try {
        doc = json::parse(read_text_file(manifest_file));
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("manifest is not valid JSON: ") + e.what());
    }

    ImportResult result;
    result.dataset = manifest_from_json(doc);
    Dataset& ds = result.dataset;

    std::vector<std::string> offending;
    std::vector<std::string> problems;
    std::set<std::string> seen;
    auto flag = [&](const std::string& id, std::string why) {
        if (offending.empty() || offending.back() != id) offending.push_back(id);
        problems.push_back(id + ": " + std::move(why));
    };

    for (auto& s : ds.samples) {
        if (!seen.insert(s.id).second) {
            flag(s.id, "duplicate id");
            continue;
        }
        if (s.class_label != 0 && s.class_label != 1) flag(s.id, "class must be 0 or 1");
        for (const auto& attr : ds.attributes) {
            auto it = s.attributes.find(attr.name);
            if (it == s.attributes.end()) {
                flag(s.id, "missing value for attribute '" + attr.name + "'");
            } else if (attr.instance_index(it->second) < 0) {
                flag(s.id, fmt::format("unknown value '{}' for attribute '{}' (declared: {}, {})",
                                       it->second, attr.name, attr.instances[0], attr.instances[1]));
            }
        }
        const fs::path image_file = root / s.image_path;
        if (s.image_path.empty() || !fs::exists(image_file)) {
            flag(s.id, "missing image file '" + s.image_path + "'");
            continue;
        }
        try {
            s.image = read_png(image_file, 3);
        } catch (const Error& e) {
            flag(s.id, e.what());
            continue;
        }
        for (const auto& [feature, rel] : s.mask_paths) {
            const fs::path mask_file = root / rel;
            if (!fs::exists(mask_file)) {
                flag(s.id, "missing mask file '" + rel + "'");
                continue;
            }
            Mask m = read_mask_png(mask_file);
            if (m.width != s.image.width || m.height != s.image.height) {
                flag(s.id, fmt::format("mask '{}' is {}x{} but image is {}x{}", feature, m.width,
                                       m.height, s.image.width, s.image.height));
                continue;
            }
            s.masks.emplace(feature, std::move(m));
        }
        if (s.mask_paths.empty()) result.maskless_ids.push_back(s.id);
    }

    if (!problems.empty()) {
        std::string msg = fmt::format("manifest validation failed for {} sample(s):", offending.size());
        for (const auto& p : problems) msg += "\n  " + p;
        throw ValidationError(msg, offending);
    }
    ds.reindex();
    result.warnings.push_back(
        "imported data is not screened for stylized images or images showing both instances of an "
        "attribute; review such samples manually");
    if (!result.maskless_ids.empty()) {
        result.warnings.push_back(fmt::format(
            "{} sample(s) have no masks and are excluded from automatic Grad-CAM verdicts",
            result.maskless_ids.size()));
    }
    return result;
}

void write_id_lists(const fs::path& path, const std::vector<std::string>& train,
                    const std::vector<std::string>& test) {
    json doc{{"train", train}, {"test", test}};
    write_text_file(path, doc.dump(2) + "\n");
}

} // namespace xbias::dataset
