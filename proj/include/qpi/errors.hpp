#pragma once

#include <stdexcept>
#include <string>

namespace qpi {

/// Invalid hyperparameter or generator argument.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Operand shapes do not line up.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A documented precondition of an operation was violated by the caller.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

/// A value is outside the domain where a metric is defined (e.g. constant targets for NMPIW).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Malformed or inconsistent input files.
struct IngestionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Training produced a NaN/Inf loss.
struct NonFiniteLossError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace qpi
