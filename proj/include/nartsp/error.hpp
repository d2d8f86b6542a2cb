#pragma once

#include <stdexcept>
#include <string>

namespace nartsp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes or dimensions that do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Malformed input text (TSPLIB, JSON-lines, config, checkpoint).
class ParseError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf appeared where finite values are required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid user configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Filesystem failure.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace nartsp
