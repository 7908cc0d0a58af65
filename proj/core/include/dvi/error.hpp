#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dvi {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not compose.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Input is structurally valid but mathematically degenerate (e.g. a constant
/// logit vector handed to min-max rescaling).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class OptimizationError : public Error {
 public:
  OptimizationError(const std::string& what, std::size_t layer)
      : Error(what), layer_(layer) {}
  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch, long batch = -1)
      : Error(what), epoch_(epoch), batch_(batch) {}
  int epoch() const noexcept { return epoch_; }
  long batch() const noexcept { return batch_; }

 private:
  int epoch_;
  long batch_;
};

/// An iterative routine exhausted its budget without meeting its tolerance.
class ToleranceError : public Error {
 public:
  using Error::Error;
};

/// Synthesis could not reach its target within the attempt budget.
class SynthesisError : public Error {
 public:
  using Error::Error;
};

/// Missing, corrupt, or version-mismatched persisted artifact.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class RenderError : public Error {
 public:
  RenderError(const std::string& what, std::size_t pixel)
      : Error(what), pixel_(pixel) {}
  std::size_t pixel() const noexcept { return pixel_; }

 private:
  std::size_t pixel_;
};

/// Lookup of an epoch or sample id that does not exist.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace dvi
