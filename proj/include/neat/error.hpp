#pragma once

#include <stdexcept>
#include <string>

namespace neat {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bad rows, bad config values, unreadable files.
class ParseError : public Error {
public:
    using Error::Error;
};

/// An identifier (item, user, category, pair) that is not known.
class LookupError : public Error {
public:
    using Error::Error;
};

/// Inputs that are individually well formed but mutually inconsistent.
class DataError : public Error {
public:
    using Error::Error;
};

/// Invalid arguments or configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite parameters or degenerate arithmetic.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace neat
