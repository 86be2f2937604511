#pragma once

#include <stdexcept>
#include <string>

namespace switchstab {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A time span or state lies outside the domain of a signal or control.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid construction parameters (negative step, infeasible class, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Inconsistent inputs to an analysis (mismatched grids, empty batches, ...).
class InputError : public Error {
public:
    using Error::Error;
};

/// The right-hand side produced a non-finite value.
class DynamicsError : public Error {
public:
    DynamicsError(const std::string& what, double time) : Error(what), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

/// No piece of a covering contains the queried state.
class CoveringViolation : public Error {
public:
    using Error::Error;
};

/// A closed-loop policy returned an index outside the active index set.
class PolicyError : public Error {
public:
    using Error::Error;
};

/// Too many covering-boundary events in one closed-loop run.
class ChatteringError : public Error {
public:
    ChatteringError(const std::string& what, double time) : Error(what), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

/// Requested operation needs information the library cannot compute.
class UnsupportedError : public Error {
public:
    using Error::Error;
};

}  // namespace switchstab
