// SPDX-License-Identifier: Apache-2.0

#include "mca/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mca {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradientReport check_gradient(const LossWithGradient& fn, std::span<const double> params,
                              double tol, double step) {
  GradientReport report;
  report.coordinates = params.size();
  std::vector<double> x(params.begin(), params.end());
  std::vector<double> analytic;
  const double f0 = fn(x, &analytic);
  if (!std::isfinite(f0)) {
    report.diagnostic = "loss is non-finite at the evaluation point";
    return report;
  }
  if (analytic.size() != x.size()) {
    report.diagnostic = "analytic gradient has " + std::to_string(analytic.size()) +
                        " entries for " + std::to_string(x.size()) + " parameters";
    return report;
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double f_plus = fn(x, nullptr);
    x[i] = saved - step;
    const double f_minus = fn(x, nullptr);
    x[i] = saved;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
      report.diagnostic = "loss is non-finite when perturbing index " + std::to_string(i);
      report.worst_index = i;
      return report;
    }
    const double numeric = (f_plus - f_minus) / (2.0 * step);
    const double err = relative_error(analytic[i], numeric);
    if (err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_index = i;
    }
  }
  report.passed = report.max_relative_error <= tol;
  return report;
}

}  // namespace mca
