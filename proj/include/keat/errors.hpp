#pragma once

#include <stdexcept>
#include <string>

namespace keat {

// Operand shapes do not fit the operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller broke a precondition (simplex weights, label range, call order...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A primitive produced NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid hyperparameter or configuration value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input file (dataset, lexicon, checkpoint, vocabulary).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace keat
