#pragma once

#include <stdexcept>
#include <string>

namespace causalgrid {

// Error hierarchy. The CLI maps each type to a distinct exit code.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input text (CSV cell, timestamp, graph DSL, serialized model).
struct FormatError : Error {
    using Error::Error;
};

// Input is well-formed but does not match the declared schema
// (missing column, node without data, dimension mismatch).
struct SchemaError : Error {
    using Error::Error;
};

// A graph constraint is broken (cycle, self loop, unknown node).
struct GraphError : Error {
    using Error::Error;
};

// Numerically degenerate input (constant column, rank-deficient fit,
// empty segment, all-missing series).
struct DegenerateError : Error {
    using Error::Error;
};

// Invalid argument value (bad preset name, k <= 0, n_perm < 1, ...).
struct InvalidArgument : Error {
    using Error::Error;
};

// A file could not be opened or written.
struct IoError : Error {
    using Error::Error;
};

}  // namespace causalgrid
