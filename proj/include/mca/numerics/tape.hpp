// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mca/numerics/matrix.hpp"

namespace mca {

/// Matrix-valued reverse-mode tape.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order; backward() walks it in exact reverse and zeroes every
/// adjoint first. A tape is single-use scratch: build, backward, read grads.
class Tape {
 public:
  struct Var {
    std::size_t id = 0;
  };

  /// Leaf node. Constants (requires_grad = false) never receive adjoints.
  Var leaf(Matrix value, bool requires_grad = true);

  /// input [B x din] * weight [din x dout] + bias [1 x dout].
  Var affine(Var input, Var weight, Var bias);
  Var relu(Var x);
  /// Row-wise x / max(||x||, eps).
  Var l2_normalize_rows(Var x, double eps = 1e-12);
  /// scale * a * b^T.
  Var scaled_dot(Var a, Var b, double scale);
  Var concat_rows(std::span<const Var> parts);

  /// Scalar sum over rows r of weight[r] * (logsumexp(scores[r, :]) -
  /// logsumexp(scores[r, positive])). positive is a row-major 0/1 mask shaped
  /// like scores. Rows with zero weight are skipped; a weighted row without
  /// any positive column is a DimensionError.
  ///
  /// With a one-hot mask this is softmax cross-entropy; with a multi-hot mask
  /// it is the supervised-contrastive "positives over everything" ratio.
  Var softmax_log_loss(Var scores, std::vector<std::uint8_t> positive,
                       std::vector<double> row_weights);

  /// Sum of weights[k] * scalars[k]; each scalar must be 1x1.
  Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights);

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  const Matrix& grad(Var v) const { return nodes_.at(v.id).adjoint; }
  double scalar(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Seeds d(output) = 1; output must be 1x1.
  void backward(Var output);
  void backward(Var output, const Matrix& seed);

 private:
  using Pullback = std::function<void(Tape&, std::size_t)>;

  struct Node {
    Matrix value;
    Matrix adjoint;
    bool needs_grad = false;
    Pullback pullback;
  };

  Var push(Matrix value, bool needs_grad, Pullback pullback);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  Matrix& adj(Var v) { return nodes_[v.id].adjoint; }

  std::vector<Node> nodes_;
};

}  // namespace mca
