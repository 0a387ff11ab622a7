#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lab {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or lengths that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A zero-norm vector where a direction is required.
class DegenerateVectorError : public Error {
 public:
  using Error::Error;
};

/// Out-of-range hyperparameter or malformed configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class EmptyBatchError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class UnsupportedOperationError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value produced while evaluating a function. `coordinate()` is
/// the flat input index being probed, when there is one.
class EvaluationError : public Error {
 public:
  explicit EvaluationError(const std::string& what, std::ptrdiff_t coordinate = -1)
      : Error(what), coordinate_(coordinate) {}
  std::ptrdiff_t coordinate() const noexcept { return coordinate_; }

 private:
  std::ptrdiff_t coordinate_;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step) : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Malformed text input (tensor dumps, config files).
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace lab
