#pragma once

#include <stdexcept>
#include <string>

namespace coir {

// Base for all domain errors. The CLI maps these to exit code 1;
// usage/argument problems are handled by the argument parser (exit 2).
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/shape problems (mismatched dimensions, bad axes).
struct DimensionError : Error {
    using Error::Error;
};

// Violated operation precondition (non-scalar loss, B < 2, bad mode, ...).
struct ContractError : Error {
    using Error::Error;
};

// Non-finite or otherwise invalid numeric input.
struct NumericError : Error {
    using Error::Error;
};

// Out-of-range lookup by position (embedding ids, token ids).
struct IndexError : Error {
    using Error::Error;
};

// Unknown id in an id-addressed structure.
struct LookupError : Error {
    using Error::Error;
};

// Malformed input data (schema violations, missing images, bad records).
struct IngestionError : Error {
    using Error::Error;
};

// Malformed binary file (bad magic, version, truncation). Carries the
// byte offset at which the problem was detected.
struct FormatError : Error {
    FormatError(const std::string& msg, std::size_t offset)
        : Error(msg + " (at byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    std::size_t byte_offset;
};

// Index construction problems (duplicate id, zero vector, dim mismatch).
struct BuildError : Error {
    using Error::Error;
};

// Near-zero vector where a direction is required.
struct DegenerateVectorError : Error {
    using Error::Error;
};

// Infeasible synthetic-data configuration.
struct GenerationError : Error {
    using Error::Error;
};

// Completion-client transport or empty-completion failures.
struct ClientError : Error {
    using Error::Error;
};

// Training divergence (NaN gradients), named by parameter block.
struct TrainingError : Error {
    using Error::Error;
};

} // namespace coir
