#pragma once

#include <stdexcept>
#include <string>

namespace obev {

// Base for every error raised by the library. The C API maps each subclass to
// one status code, see capi.cpp.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite values where finite ones are required (losses, oracles).
class NumericError : public Error {
public:
    using Error::Error;
};

class SequenceError : public Error {
public:
    using Error::Error;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

}  // namespace obev
