#include "xbias/experiment/store.hpp"

#include <algorithm>

#include "xbias/dataset/manifest.hpp"

namespace xbias::experiment {

ResultsStore::ResultsStore(std::filesystem::path root) : root_(std::move(root)) {}

bool ResultsStore::exists(const std::string& rel) const { return std::filesystem::exists(root_ / rel); }

void ResultsStore::write(const std::string& rel, const std::string& content) {
    std::lock_guard lock(mutex_);
    if (std::filesystem::exists(root_ / rel)) throw StoreError("refusing to overwrite " + rel);
    dataset::write_text_file(root_ / rel, content);
}

void ResultsStore::write_json(const std::string& rel, const nlohmann::json& j) { write(rel, j.dump(2) + "\n"); }

std::string ResultsStore::read(const std::string& rel) const {
    if (!exists(rel)) throw StoreError("missing artifact " + rel);
    return dataset::read_text_file(root_ / rel);
}

nlohmann::json ResultsStore::read_json(const std::string& rel) const { return nlohmann::json::parse(read(rel)); }

std::filesystem::path ResultsStore::claim(const std::string& rel) {
    std::lock_guard lock(mutex_);
    const auto p = root_ / rel;
    if (std::filesystem::exists(p)) throw StoreError("refusing to overwrite " + rel);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    return p;
}

std::string ResultsStore::scope_dir(const std::string& scope) {
    if (scope == "global") return "global";
    std::string s = scope;
    std::replace(s.begin(), s.end(), ':', '-');
    std::replace(s.begin(), s.end(), '/', '_');
    return "ratio_" + s;
}

bool ResultsStore::stage_done(const std::string& scope, const std::string& stage) const {
    return exists(scope_dir(scope) + "/" + stage + ".done");
}

void ResultsStore::mark_done(const std::string& scope, const std::string& stage, const nlohmann::json& info) {
    nlohmann::json j = info.is_null() ? nlohmann::json::object() : info;
    j["stage"] = stage;
    write_json(scope_dir(scope) + "/" + stage + ".done", j);
}

} // namespace xbias::experiment
