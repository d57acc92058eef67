#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flycl {

// Dimension or layout mismatch between tensors or configs.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Synaptic degree outside [1, n_in].
struct DegreeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Class label outside [0, n_classes).
struct LabelError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A ForwardTrace that does not match the model it is replayed against.
struct TraceError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Class count not divisible into the requested task partition.
struct SplitError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed container file; carries the byte offset of the failure.
struct FormatError : std::runtime_error {
    std::size_t offset;
    FormatError(const std::string& msg, std::size_t off)
        : std::runtime_error(msg + " (byte offset " + std::to_string(off) + ")"), offset(off) {}
};

// Empty, insufficient, or missing data where a computation requires it.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A metric that is undefined for the requested inputs (t < 2, all-zero
// matrix, near-zero gradients, empty profiles).
struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad configuration: unknown key, unparsable value, invalid sweep parameter.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operation requested on a model that lacks the required structure.
struct NotApplicableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mathematical domain violation (n < 2, r > n, ...).
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

}  // namespace flycl
