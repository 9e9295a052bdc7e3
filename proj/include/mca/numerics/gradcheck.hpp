// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mca {

/// Evaluates f(x); when grad is non-null it also fills the analytic gradient.
using LossWithGradient = std::function<double(std::span<const double> x, std::vector<double>* grad)>;

struct GradientReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
  bool passed = false;
  std::string diagnostic;  // set when the check could not run cleanly
};

/// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero gradients from
/// blowing up the ratio on pure round-off.
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Compares the analytic gradient of fn at params against central differences
/// (f(x + step) - f(x - step)) / (2 step), coordinate by coordinate.
GradientReport check_gradient(const LossWithGradient& fn, std::span<const double> params,
                              double tol, double step = 1e-5);

}  // namespace mca
