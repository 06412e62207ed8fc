#pragma once

#include <stdexcept>
#include <string>

namespace dvc {

/// Base class for all toolkit errors. `exit_code()` maps onto the CLI contract.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 4; }
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

/// Data that cannot support the requested fit (too few rows, constant columns, ties).
class DegenerateDataError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

/// Copula parameters outside the family domain.
class InvalidStateError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

/// Bad configuration: unknown names, inconsistent settings.
class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

/// A required numerical routine failed to produce a usable answer.
class NumericalError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

}  // namespace dvc
