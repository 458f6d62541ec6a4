#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lwpk {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The requested protocol cannot be carved out of the available data.
class ProtocolInfeasible : public Error {
public:
    using Error::Error;
};

/// Malformed feature table; `row()` is the 1-based row index.
class ParseError : public Error {
public:
    ParseError(std::size_t row, const std::string& what)
        : Error("row " + std::to_string(row) + ": " + what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

/// An optimizer step saw a non-finite gradient; parameters were left untouched.
class PoisonedStep : public Error {
public:
    using Error::Error;
};

/// Invalid configuration; `key()` is the dotted key path at fault.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& what)
        : Error(key + ": " + what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

}  // namespace lwpk
