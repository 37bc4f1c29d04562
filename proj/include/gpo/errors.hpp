#pragma once

#include <stdexcept>
#include <string>

namespace gpo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: unknown names, invalid sizes, malformed config files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operands with incompatible shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Quantity that is mathematically undefined at the requested point.
class UndefinedResultError : public Error {
 public:
  using Error::Error;
};

/// Operation that does not apply to the given loss (e.g. Taylor data of a kinked loss).
class NotApplicableError : public Error {
 public:
  using Error::Error;
};

/// Objective decreases without bound along the solver's path.
class UnboundedObjectiveError : public Error {
 public:
  using Error::Error;
};

/// Requested output would be empty.
class EmptyOutputError : public Error {
 public:
  using Error::Error;
};

}  // namespace gpo
