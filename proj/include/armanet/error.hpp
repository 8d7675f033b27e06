#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace armanet {

// Caller violated a precondition (bad shape, bad flag, out-of-range parameter).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerically ill-posed computation; maps to exit code 2 in the CLI.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a denominator spectrum has an entry below the guard threshold.
class SingularSpectrumError : public NumericError {
 public:
  SingularSpectrumError(std::size_t k1, std::size_t k2, std::size_t channel, double magnitude)
      : NumericError("singular spectrum at frequency (" + std::to_string(k1) + ", " +
                     std::to_string(k2) + ") channel " + std::to_string(channel) +
                     ", |den| = " + std::to_string(magnitude)),
        k1_(k1), k2_(k2), channel_(channel), magnitude_(magnitude) {}

  explicit SingularSpectrumError(const std::string& what)
      : NumericError(what), k1_(0), k2_(0), channel_(0), magnitude_(0.0) {}

  std::size_t k1() const noexcept { return k1_; }
  std::size_t k2() const noexcept { return k2_; }
  std::size_t channel() const noexcept { return channel_; }
  double magnitude() const noexcept { return magnitude_; }

 private:
  std::size_t k1_, k2_, channel_;
  double magnitude_;
};

// The gradient map of a network does not fit on the requested grid.
class WraparoundError : public NumericError {
 public:
  using NumericError::NumericError;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw UsageError(message);
}

}  // namespace armanet
