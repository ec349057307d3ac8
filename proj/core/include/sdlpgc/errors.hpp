#pragma once

#include <stdexcept>
#include <string>

namespace sdlpgc {

/// Invalid user-supplied configuration (bad hyperparameters, unknown keys).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data that violates the dataset contract (schema, NaN, dates).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable, corrupt or unsupported checkpoint.
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure during optimization (non-finite loss).
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace sdlpgc
