#pragma once

#include <stdexcept>
#include <string>

namespace transiam {

/// Shape or extent disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input value outside the domain an operation accepts.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Non-finite values produced by a computation (overflow, divergent training).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, flags or overrides.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed, truncated or foreign file content.
class CorruptFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Autodiff misuse: backward on a non-scalar or a tensor the tape never saw.
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace transiam
