#pragma once

#include <stdexcept>
#include <string>

namespace mvcc {

// Bad shapes, bad model/run configuration, incompatible checkpoints.
// CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : ConfigError {
    using ConfigError::ConfigError;
};

// Violated call contract (non-scalar loss, out-of-range token id, all-PAD
// reference, empty memory in drop mode, ...).
struct ContractError : ConfigError {
    using ConfigError::ConfigError;
};

// Unreadable or malformed input data. CLI exit code 3.
struct IngestionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required. CLI exit code 4.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mvcc
