#pragma once

#include <stdexcept>
#include <string>

namespace cvr {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand dimensions do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Value outside the domain of an operation (non-positive box size, mixed views, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// Invalid or incomplete configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Malformed or dimensionally inconsistent file content.
class SchemaError : public Error {
public:
    using Error::Error;
};

// Non-finite value encountered during optimization.
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace cvr
