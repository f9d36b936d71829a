#pragma once

#include <stdexcept>
#include <string>

namespace balayage {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A cube, ball or point does not meet the grid the way an operation needs.
class GeometryError : public Error {
public:
    using Error::Error;
};

/// A request is finer than the grid can represent.
class ResolutionError : public Error {
public:
    using Error::Error;
};

/// Inputs outside the mathematical domain of an operation (negative potential, t <= 0, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A quadrature or iterative refinement failed its drift test.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double drift)
        : Error(what), drift_(drift) {}
    double drift() const noexcept { return drift_; }

private:
    double drift_;
};

/// Internal bookkeeping (partition, area) did not close.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

/// Bad configuration or command-line input.
class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace balayage
