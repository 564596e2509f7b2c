#pragma once

#include <stdexcept>
#include <string>

namespace ustat {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Tensor order or alphabet size does not match what an operation expects.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// A numeric argument is outside its admissible range.
class ParameterError : public Error {
public:
  using Error::Error;
};

/// An input violates a mathematical precondition (degeneracy, positive variance, ...).
class PreconditionError : public Error {
public:
  using Error::Error;
};

/// The requested computation exceeds a hard capacity limit.
class CapacityError : public Error {
public:
  using Error::Error;
};

/// Missing or inconsistent configuration.
class ConfigurationError : public Error {
public:
  using Error::Error;
};

/// A numeric identity or inequality that must hold did not.
class ContractViolation : public Error {
public:
  ContractViolation(std::string contract, const std::string& detail)
      : Error(contract + ": " + detail), contract_(std::move(contract)) {}

  const std::string& contract() const noexcept { return contract_; }

private:
  std::string contract_;
};

}  // namespace ustat
