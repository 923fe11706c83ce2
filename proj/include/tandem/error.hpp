#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tandem {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape or extent incompatibility between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Invalid hyperparameter or spec combination.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Data that violates a domain constraint (label range, binary targets, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// API misuse, e.g. calling backward on a non-scalar.
class UsageError : public Error {
public:
    using Error::Error;
};

/// NaN or Inf produced by a forward or backward pass.
class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents. Carries the byte offset where parsing failed.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

}  // namespace tandem
