#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cedo {

// Base for everything thrown by this library. Catching cedo::Error at the CLI
// boundary is enough to map failures onto process exit codes.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand dimensions don't line up. Message names both shapes.
struct ShapeError : Error {
    using Error::Error;
};

// A value passed by the caller violates a documented precondition.
struct ArgumentError : Error {
    using Error::Error;
};

// Malformed input file (JSON structure, missing field, bad type).
struct ParseError : Error {
    using Error::Error;
};

// Operation invoked on an object in the wrong state.
struct StateError : Error {
    using Error::Error;
};

// Numeric computation produced or detected a non-finite value.
struct NumericError : Error {
    using Error::Error;
};

// Training aborted on a non-finite loss; carries the offending step index.
struct DivergenceError : NumericError {
    DivergenceError(const std::string& msg, std::size_t step)
        : NumericError(msg), step_index(step) {}
    std::size_t step_index;
};

// Filesystem trouble: unreadable input, unwritable output.
struct IoError : Error {
    using Error::Error;
};

} // namespace cedo
