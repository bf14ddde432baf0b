#pragma once

#include <stdexcept>
#include <string>

namespace mesc {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape or size mismatch between operands (also non-square where square is required).
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

/// Input outside the mathematical domain of an operation (negative entry, asymmetry, ...).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

/// Invalid scalar argument (zero fan-in, negative threshold, non-bijective permutation, ...).
class ValueError : public Error {
public:
    explicit ValueError(const std::string& msg) : Error(msg) {}
};

/// An iterative solve produced a non-finite value; the message names the iteration.
class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& msg) : Error(msg) {}
};

/// Failure to open, read or write a file.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

/// Malformed file content (bad magic, bad header, payload length mismatch).
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

/// Invalid configuration or command-line argument; maps to exit code 2 in the CLI.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace mesc
