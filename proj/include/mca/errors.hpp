// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mca {

/// Operand shapes do not fit the operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf surfaced where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejected experiment or dataset configuration.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A history queue was read before it received any prediction.
class NotWarmedUpError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace mca

namespace mca {

/// Training produced a non-finite loss or gradient.
class DivergenceError : public NumericError {
 public:
  DivergenceError(int epoch, std::size_t batch, const std::string& detail)
      : NumericError("diverged at epoch " + std::to_string(epoch) + " batch " +
                     std::to_string(batch) + ": " + detail),
        epoch_(epoch), batch_(batch) {}

  int epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  int epoch_;
  std::size_t batch_;
};

}  // namespace mca
