// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mca/numerics/gradcheck.hpp"

namespace mca {

struct GradientCase {
  std::string name;  // "center", "group", "instance", "classifier", "total"
  GradientReport report;
  double seconds = 0.0;
};

struct GradientSuiteShape {
  std::size_t batch = 4;
  std::size_t classes = 3;
  std::size_t modalities = 2;
  std::size_t emb_dim = 8;
  double tau = 0.1;
};

/// Finite-difference checks of every alignment loss and the assembled total
/// on a random small batch. Each case differentiates through the row
/// normalization so the checked path matches training.
std::vector<GradientCase> run_gradient_suite(std::uint64_t seed, double tol = 1e-4,
                                             const GradientSuiteShape& shape = {});

}  // namespace mca
