#pragma once

#include <stdexcept>
#include <string>

namespace ilmpc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on shapes or arguments was violated by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// A configuration value is missing or out of its domain.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// The alpha-shape or sampling region could not be built from the input points.
class DegenerateRegion : public Error {
 public:
  using Error::Error;
};

/// The optimal control problem could not be solved and no feasible fallback exists.
class SolverFailure : public Error {
 public:
  using Error::Error;
};

/// A closed-loop state entered the unsafe set.
class SafetyViolation : public Error {
 public:
  using Error::Error;
};

/// Certificate training produced non-finite values or failed its post-checks.
class TrainingDivergence : public Error {
 public:
  using Error::Error;
};

}  // namespace ilmpc
