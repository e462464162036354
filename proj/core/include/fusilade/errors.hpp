#pragma once

#include <stdexcept>
#include <string>

namespace fusilade {

/// Operand shapes do not agree (matrix products, label/score vectors, model dims).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An operation was invoked out of order, e.g. backward without a recorded forward.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed or truncated input file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user configuration or arguments.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Data-level failure that is not a shape problem (empty cohort, undefined metric, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure during optimisation.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fusilade
