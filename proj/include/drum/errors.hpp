#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace drum {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A time at which a division by alpha_t, sigma_t or r_t would be by zero.
class DegenerateTime : public Error {
 public:
  using Error::Error;
};

class ScheduleInconsistency : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericFailure : public Error {
 public:
  explicit NumericFailure(const std::string& what, std::ptrdiff_t step = -1)
      : Error(step >= 0 ? what + " (step " + std::to_string(step) + ")" : what), step_(step) {}

  // Sampler or training step at which the failure surfaced, -1 if not applicable.
  std::ptrdiff_t step() const { return step_; }

 private:
  std::ptrdiff_t step_;
};

class TrainingFailure : public NumericFailure {
 public:
  using NumericFailure::NumericFailure;
};

}  // namespace drum
