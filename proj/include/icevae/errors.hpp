#pragma once

#include <stdexcept>
#include <string>

namespace icevae {

/// Operand shapes disagree (matrix product, concatenation, head widths, ...).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value lies outside the domain of a density or loss (stddev <= 0, y not in {0,1}).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An API was called out of sequence or with an argument of the wrong kind.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed dataset or checkpoint file. The message names the row and column.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace icevae
