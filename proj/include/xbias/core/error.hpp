#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace xbias {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input data failed validation. Carries the offending record ids.
class ValidationError : public Error {
public:
    ValidationError(const std::string& what, std::vector<std::string> offending_ids)
        : Error(what), offending_ids_(std::move(offending_ids)) {}
    explicit ValidationError(const std::string& what) : Error(what) {}

    const std::vector<std::string>& offending_ids() const noexcept { return offending_ids_; }

private:
    std::vector<std::string> offending_ids_;
};

/// A pipeline stage could not complete (CLI exit code 3).
class StageError : public Error {
public:
    using Error::Error;
};

} // namespace xbias
