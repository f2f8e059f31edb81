#pragma once

#include <stdexcept>
#include <string>

namespace ccpda {

/// Shape or width disagreement between tensors or network stages.
/// Messages always name both offending shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A documented precondition was broken by the caller (label out of range,
/// non-scalar loss, mismatched buffer sizes, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Bad user-supplied configuration: non-positive dimensions, invalid task
/// specs, malformed hyperparameters.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input file. The message names the offending line when known.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operation that needs at least one sample/row received none.
class EmptyInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace ccpda
