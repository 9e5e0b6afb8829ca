#pragma once

#include <stdexcept>
#include <string>

namespace avwm {

// Base class for all artifact errors so callers can catch one type at the CLI
// boundary and map it to an exit status.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/axis mismatch in a numeric primitive. Message names the primitive and
// the offending shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A documented precondition of an operation was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

// The API was driven in an unsupported order (e.g. backward twice).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Bad configuration value or indivisible dimension.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Query for a grid cell with no navigable path to the source.
class UnreachableError : public Error {
 public:
  using Error::Error;
};

// A generated scene could not produce a valid trajectory after retries.
class SceneRejectedError : public Error {
 public:
  using Error::Error;
};

}  // namespace avwm
