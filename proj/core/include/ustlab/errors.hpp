#pragma once

#include <stdexcept>
#include <string>

namespace ustlab {

/// Base class of every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A site or geometry lies outside the window it is used with.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied configuration (experiment specs, CLI flags).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A problem size exceeds a configured bound (exact solvers, horizons).
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Snapshot or results file failed a structural or invariant check on load.
class CorruptInputError : public Error {
 public:
  using Error::Error;
};

/// An operation was called with inputs that break its documented contract.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// The realization uses a boundary/root convention the operation does not support.
class UnsupportedConventionError : public Error {
 public:
  using Error::Error;
};

/// Fewer usable data points than a fit requires.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// A check cannot be decided on the simulated window.
class InconclusiveError : public Error {
 public:
  using Error::Error;
};

/// Effective resistance to the complement of a ball that covers its component.
class UndefinedResistanceError : public Error {
 public:
  using Error::Error;
};

}  // namespace ustlab
