// SPDX-License-Identifier: Apache-2.0

#ifndef SYSID_ERRORS_HPP
#define SYSID_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace sysid {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Inconsistent matrix/vector dimensions between model, data, or arguments.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error(what) {}
};

/// A documented precondition of an operation was violated.
class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& what) : Error(what) {}
};

/// Invalid or rejected configuration input.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

/// Numerical failure (factorization breakdown, stalled integrator, ...).
/// Carries the step index when the failure is tied to a recursion step.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what, long step = -1)
        : Error(step >= 0 ? what + " (step " + std::to_string(step) + ")" : what),
          step_(step) {}
    long step() const { return step_; }

private:
    long step_;
};

/// A simulated or filtered trajectory left the finite range.
class DivergedError : public Error {
public:
    explicit DivergedError(const std::string& what, long step = -1)
        : Error(step >= 0 ? what + " (step " + std::to_string(step) + ")" : what),
          step_(step) {}
    long step() const { return step_; }

private:
    long step_;
};

/// Malformed external data file; carries the offending row when known.
class IngestError : public Error {
public:
    explicit IngestError(const std::string& what, long row = -1)
        : Error(row >= 0 ? what + " (row " + std::to_string(row) + ")" : what),
          row_(row) {}
    long row() const { return row_; }

private:
    long row_;
};

}  // namespace sysid

#endif  // SYSID_ERRORS_HPP
