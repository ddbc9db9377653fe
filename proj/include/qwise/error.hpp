#pragma once

#include <stdexcept>
#include <string>

namespace qwise {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

// Integrator could not advance; carries the last time it reached.
class IntegrationFailure : public Error {
public:
    IntegrationFailure(const std::string& what, double time_reached_s)
        : Error(what), time_reached_s_(time_reached_s) {}
    double time_reached_s() const noexcept { return time_reached_s_; }

private:
    double time_reached_s_;
};

// Linear system is singular or too ill-conditioned to invert.
class InversionError : public Error {
public:
    using Error::Error;
};

// Least-squares design matrix lost rank (e.g. collinear support).
class RankDeficiencyError : public Error {
public:
    using Error::Error;
};

// Invalid numeric input such as NaN samples.
class DataError : public Error {
public:
    using Error::Error;
};

// Bad or inconsistent configuration value; key_path names the offending key.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what, std::string key_path = {})
        : Error(key_path.empty() ? what : key_path + ": " + what), key_path_(std::move(key_path)) {}
    const std::string& key_path() const noexcept { return key_path_; }

private:
    std::string key_path_;
};

enum class FormatErrorKind { io, magic_mismatch, version_mismatch, truncated, malformed };

// Failure while reading one of the on-disk formats.
class FormatError : public Error {
public:
    FormatError(FormatErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
    FormatErrorKind kind() const noexcept { return kind_; }

private:
    FormatErrorKind kind_;
};

}  // namespace qwise
