// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace dmrom {

// Bad input: malformed files, out-of-range parameters, inconsistent shapes.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical or environmental failure on otherwise valid input.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by detrend_standardize; carries the offending channel.
class ConstantChannelError : public ValidationError {
 public:
  ConstantChannelError(std::size_t channel, const std::string& name)
      : ValidationError("channel " + std::to_string(channel) + " ('" + name +
                        "') has zero variance after detrending"),
        channel_(channel) {}
  std::size_t channel() const noexcept { return channel_; }

 private:
  std::size_t channel_;
};

// Raised when a closed-loop forecast leaves the finite range.
class DivergenceError : public NumericalError {
 public:
  explicit DivergenceError(std::size_t step)
      : NumericalError("forecast diverged at step " + std::to_string(step)),
        step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace dmrom
