#include "xbias/dataset/concepts.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "xbias/core/error.hpp"
#include "xbias/core/seed.hpp"
#include "xbias/dataset/manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace xbias::dataset {
namespace {

std::uint64_t image_hash(const Image& img) {
    std::string_view bytes(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
    return fnv1a(bytes) ^ splitmix64(static_cast<std::uint64_t>(img.width) << 32 | img.height);
}

std::vector<Image> read_dir_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw ValidationError("missing concept directory " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Image> out;
    out.reserve(files.size());
    for (const auto& f : files) out.push_back(read_png(f, 3));
    return out;
}

} // namespace

void ConceptSet::validate() const {
    if (name.empty()) throw ValidationError("concept set without a name");
    if (positives.size() < 2 || negatives.size() < 2) {
        throw ValidationError(fmt::format("concept '{}' needs >= 2 examples per side (has {} / {})", name,
                                          positives.size(), negatives.size()));
    }
    std::set<std::uint64_t> pos;
    for (const auto& img : positives) pos.insert(image_hash(img));
    for (const auto& img : negatives) {
        if (pos.count(image_hash(img))) {
            auto it = std::find(positives.begin(), positives.end(), img);
            if (it != positives.end()) {
                throw ValidationError("concept '" + name + "' has an image on both the positive and negative side");
            }
        }
    }
}

void write_concepts(const fs::path& root, const std::vector<ConceptSet>& concepts) {
    json descriptor;
    descriptor["concepts"] = json::array();
    for (const auto& c : concepts) {
        c.validate();
        const std::string pos_rel = c.name + "/positives";
        const std::string neg_rel = c.name + "/negatives";
        fs::create_directories(root / pos_rel);
        fs::create_directories(root / neg_rel);
        for (std::size_t i = 0; i < c.positives.size(); ++i) {
            write_png(root / pos_rel / fmt::format("{:04d}.png", i), c.positives[i]);
        }
        for (std::size_t i = 0; i < c.negatives.size(); ++i) {
            write_png(root / neg_rel / fmt::format("{:04d}.png", i), c.negatives[i]);
        }
        descriptor["concepts"].push_back({{"name", c.name},
                                          {"attribute", c.attribute},
                                          {"instance", c.instance},
                                          {"positives", pos_rel},
                                          {"negatives", neg_rel},
                                          {"provenance", c.provenance},
                                          {"composition", c.composition}});
    }
    write_text_file(root / "descriptor.json", descriptor.dump(2) + "\n");
}

std::vector<ConceptSet> read_concepts(const fs::path& root) {
    json descriptor;
    try {
        descriptor = json::parse(read_text_file(root / "descriptor.json"));
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("concept descriptor is not valid JSON: ") + e.what());
    }
    std::vector<ConceptSet> out;
    try {
        for (const auto& j : descriptor.at("concepts")) {
            ConceptSet c;
            c.name = j.at("name").get<std::string>();
            c.attribute = j.value("attribute", std::string{});
            c.instance = j.value("instance", std::string{});
            c.provenance = j.value("provenance", std::string{});
            c.composition = j.value("composition", json::object());
            c.positives = read_dir_images(root / j.at("positives").get<std::string>());
            c.negatives = read_dir_images(root / j.at("negatives").get<std::string>());
            c.validate();
            out.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed concept descriptor: ") + e.what());
    }
    return out;
}

} // namespace xbias::dataset
