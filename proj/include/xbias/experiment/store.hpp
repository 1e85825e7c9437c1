#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "xbias/core/error.hpp"

namespace xbias::experiment {

class StoreError : public Error {
public:
    using Error::Error;
};

/// Write-once artifact directory. Paths are relative to the store root;
/// writing an existing artifact is rejected.
class ResultsStore {
public:
    explicit ResultsStore(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }
    std::filesystem::path path(const std::string& rel) const { return root_ / rel; }

    bool exists(const std::string& rel) const;
    void write(const std::string& rel, const std::string& content);
    void write_json(const std::string& rel, const nlohmann::json& j);
    std::string read(const std::string& rel) const;
    nlohmann::json read_json(const std::string& rel) const;
    /// Reserves a path for an artifact written by other code (directories
    /// included). Throws if something already exists there.
    std::filesystem::path claim(const std::string& rel);

    bool stage_done(const std::string& scope, const std::string& stage) const;
    void mark_done(const std::string& scope, const std::string& stage, const nlohmann::json& info = {});

    /// Directory name of a ratio scope, e.g. "1:0" -> "ratio_1-0".
    static std::string scope_dir(const std::string& scope);

private:
    std::filesystem::path root_;
    mutable std::mutex mutex_;
};

} // namespace xbias::experiment
