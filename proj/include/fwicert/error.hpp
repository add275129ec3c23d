#ifndef FWICERT_ERROR_HPP
#define FWICERT_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fwicert {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Rejected input: shapes do not compose, values out of range, etc.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(what) {}
};

/// Malformed on-disk artifact. Carries the byte offset where parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t byte_offset)
        : Error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    std::size_t offset;
};

/// File version is newer/older than this build understands.
class VersionError : public Error {
public:
    explicit VersionError(const std::string& what) : Error(what) {}
};

/// An iterative routine failed to converge. Carries the last iterate value.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double last)
        : Error(what + " (last iterate " + std::to_string(last) + ")"),
          last_iterate(last) {}
    double last_iterate;
};

/// Bad configuration: unknown key, type mismatch, missing required field.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

} // namespace fwicert

#endif
