#pragma once

#include <stdexcept>
#include <string>

namespace ppg2abp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad value passed by the caller (sizes, ranges, flags).
struct ArgumentError : Error {
  using Error::Error;
};

/// Data violates an invariant of its type (channel lengths, sample rate, ...).
struct ValidationError : Error {
  using Error::Error;
};

/// Malformed input file; message names line and field where known.
struct ParseError : Error {
  using Error::Error;
};

/// Tensor/operator shape mismatch.
struct ShapeError : Error {
  using Error::Error;
};

/// Normalization of a constant signal.
struct DegenerateRangeError : ArgumentError {
  using ArgumentError::ArgumentError;
};

/// Non-finite loss during training; carries the offending step.
struct TrainingDivergedError : Error {
  long step;
  explicit TrainingDivergedError(long s)
      : Error("training diverged: non-finite loss at step " + std::to_string(s)), step(s) {}
};

}  // namespace ppg2abp
