#pragma once

#include <stdexcept>
#include <string>

namespace simdiff {

// Operand shapes do not fit the operation.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced or consumed where finite values are required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration or input file.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Artifact (checkpoint, dataset) does not match the configuration.
class ArtifactMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace simdiff
