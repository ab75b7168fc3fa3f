#pragma once

#include <stdexcept>
#include <string>

namespace pdelin {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mismatched dimensions, lengths or grid shapes.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Failure of a numerical routine (solver, SVD, root bracket, underflow).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// A precondition of an algorithm does not hold on the supplied data.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Missing or malformed configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// The solution operator cannot be applied: the denominator floor or
/// conditioning bound is violated. Carries the offending value.
class InversionDomainError : public Error {
public:
    InversionDomainError(const std::string& what, double value)
        : Error(what), value_(value) {}

    double value() const noexcept { return value_; }

private:
    double value_;
};

}  // namespace pdelin
