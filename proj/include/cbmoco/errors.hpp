#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cbmoco {

/// Invalid scan geometry or experiment configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Bad argument to a library operation (shape mismatch, out-of-range input, non-finite value).
struct ArgumentError : std::invalid_argument {
    explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

/// Geometrically degenerate situation (point at infinity, broken trajectory, singular ray).
struct GeometryError : std::runtime_error {
    explicit GeometryError(const std::string& what) : std::runtime_error(what) {}
};

/// Operation applied to a projection stack in the wrong processing state.
struct StateError : std::logic_error {
    explicit StateError(const std::string& what) : std::logic_error(what) {}
};

/// Malformed file contents (sidecar/raw mismatch, wrong JSON shape).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Optimizer encountered a non-finite objective or gradient; carries the
/// objective trace recorded up to the failing iteration.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
    std::vector<double> trace;
};

} // namespace cbmoco
