#pragma once

#include <stdexcept>
#include <string>

namespace mvr {

/// A caller violated a documented precondition (bad shape, out-of-range
/// argument, mismatched view counts, ...).  These indicate programming errors
/// in the calling code, not recoverable runtime conditions.
class ContractError : public std::invalid_argument {
public:
    explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

/// Filesystem or serialization failure.  The message always names the path
/// (or stream) involved so CLI error lines are actionable.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent run configuration (unknown key, bad value,
/// missing required field).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Training aborted (non-finite loss, unusable checkpoint, ...).
class TrainError : public std::runtime_error {
public:
    explicit TrainError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mvr
