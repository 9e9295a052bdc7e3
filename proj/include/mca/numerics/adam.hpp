// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mca {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers for one parameter array.
struct AdamState {
  AdamState() = default;
  AdamState(std::size_t n, AdamHyper hyper)
      : first_moment(n, 0.0), second_moment(n, 0.0), lr(hyper.lr), beta1(hyper.beta1),
        beta2(hyper.beta2), eps(hyper.eps) {}

  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update in place. A non-finite gradient aborts the
/// update before anything is touched (NumericError naming the index).
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

}  // namespace mca
