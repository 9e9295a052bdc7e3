// SPDX-License-Identifier: Apache-2.0

#include "mca/numerics/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mca/errors.hpp"

namespace mca {

namespace {

void add_into(Matrix& dst, const Matrix& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void add_scaled(Matrix& dst, const Matrix& src, double scale) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

}  // namespace

Tape::Var Tape::push(Matrix value, bool needs_grad, Pullback pullback) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  node.pullback = std::move(pullback);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Tape::Var Tape::leaf(Matrix value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

double Tape::scalar(Var v) const {
  const Matrix& m = value(v);
  if (m.rows() != 1 || m.cols() != 1) throw DimensionError("scalar(): node is " + m.shape_str());
  return m(0, 0);
}

Tape::Var Tape::affine(Var input, Var weight, Var bias) {
  const Matrix& b = value(bias);
  if (b.rows() != 1) throw DimensionError("affine: bias must be a row, got " + b.shape_str());
  Matrix out = affine_forward(value(input), value(weight), b.row(0));
  const bool ng = needs(input) || needs(weight) || needs(bias);
  return push(std::move(out), ng, [input, weight, bias](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].adjoint;
    if (t.needs(input)) add_into(t.adj(input), matmul_nt(g, t.value(weight)));
    if (t.needs(weight)) add_into(t.adj(weight), matmul_tn(t.value(input), g));
    if (t.needs(bias)) {
      Matrix& db = t.adj(bias);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) db(0, c) += g(r, c);
    }
  });
}

Tape::Var Tape::relu(Var x) {
  Matrix out = value(x);
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return push(std::move(out), needs(x), [x](Tape& t, std::size_t self) {
    if (!t.needs(x)) return;
    const Matrix& g = t.nodes_[self].adjoint;
    auto in = t.value(x).data();
    auto dx = t.adj(x).data();
    auto gd = g.data();
    // subgradient at exactly 0 is 0
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (in[i] > 0.0) dx[i] += gd[i];
  });
}

Tape::Var Tape::l2_normalize_rows(Var x, double eps) {
  const Matrix& in = value(x);
  std::vector<double> norms(in.rows());
  Matrix out = in;
  for (std::size_t r = 0; r < in.rows(); ++r) {
    norms[r] = l2_norm(in.row(r));
    const double denom = std::max(norms[r], eps);
    for (double& v : out.row(r)) v /= denom;
  }
  return push(std::move(out), needs(x), [x, eps, norms](Tape& t, std::size_t self) {
    if (!t.needs(x)) return;
    const Matrix& g = t.nodes_[self].adjoint;
    const Matrix& y = t.nodes_[self].value;
    Matrix& dx = t.adj(x);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto gr = g.row(r);
      auto yr = y.row(r);
      auto dr = dx.row(r);
      if (norms[r] >= eps) {
        const double proj = dot(yr, gr);
        for (std::size_t c = 0; c < gr.size(); ++c) dr[c] += (gr[c] - yr[c] * proj) / norms[r];
      } else {
        for (std::size_t c = 0; c < gr.size(); ++c) dr[c] += gr[c] / eps;
      }
    }
  });
}

Tape::Var Tape::scaled_dot(Var a, Var b, double scale) {
  Matrix out = matmul_nt(value(a), value(b));
  for (double& v : out.data()) v *= scale;
  return push(std::move(out), needs(a) || needs(b), [a, b, scale](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].adjoint;
    if (t.needs(a)) add_scaled(t.adj(a), matmul(g, t.value(b)), scale);
    if (t.needs(b)) add_scaled(t.adj(b), matmul_tn(g, t.value(a)), scale);
  });
}

Tape::Var Tape::concat_rows(std::span<const Var> parts) {
  std::vector<Matrix> values;
  values.reserve(parts.size());
  bool ng = false;
  for (Var p : parts) {
    values.push_back(value(p));
    ng = ng || needs(p);
  }
  std::vector<Var> ids(parts.begin(), parts.end());
  return push(mca::concat_rows(values), ng, [ids](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].adjoint;
    std::size_t offset = 0;
    for (Var p : ids) {
      const std::size_t n = t.value(p).rows();
      if (t.needs(p)) {
        Matrix& dp = t.adj(p);
        for (std::size_t r = 0; r < n; ++r) {
          auto src = g.row(offset + r);
          auto dst = dp.row(r);
          for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
        }
      }
      offset += n;
    }
  });
}

Tape::Var Tape::softmax_log_loss(Var scores, std::vector<std::uint8_t> positive,
                                 std::vector<double> row_weights) {
  const Matrix& s = value(scores);
  if (positive.size() != s.size() || row_weights.size() != s.rows()) {
    throw DimensionError("softmax_log_loss: scores " + s.shape_str() + ", mask length " +
                         std::to_string(positive.size()) + ", weights length " +
                         std::to_string(row_weights.size()));
  }
  if (!s.all_finite()) throw NumericError("softmax_log_loss: non-finite scores");
  // Per-row softmax over all columns and over the positive columns only.
  Matrix p_all(s.rows(), s.cols());
  Matrix p_pos(s.rows(), s.cols());
  double loss = 0.0;
  for (std::size_t r = 0; r < s.rows(); ++r) {
    if (row_weights[r] == 0.0) continue;
    auto row = s.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double mx_pos = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < s.cols(); ++c)
      if (positive[r * s.cols() + c]) mx_pos = std::max(mx_pos, row[c]);
    if (!std::isfinite(mx_pos)) {
      throw DimensionError("softmax_log_loss: weighted row " + std::to_string(r) +
                           " has no positive column");
    }
    double sum_all = 0.0;
    double sum_pos = 0.0;
    for (std::size_t c = 0; c < s.cols(); ++c) {
      p_all(r, c) = std::exp(row[c] - mx);
      sum_all += p_all(r, c);
      if (positive[r * s.cols() + c]) {
        p_pos(r, c) = std::exp(row[c] - mx_pos);
        sum_pos += p_pos(r, c);
      }
    }
    for (std::size_t c = 0; c < s.cols(); ++c) {
      p_all(r, c) /= sum_all;
      p_pos(r, c) /= sum_pos;
    }
    const double lse_all = mx + std::log(sum_all);
    const double lse_pos = mx_pos + std::log(sum_pos);
    loss += row_weights[r] * (lse_all - lse_pos);
  }
  Matrix out(1, 1, loss);
  return push(std::move(out), needs(scores),
              [scores, weights = std::move(row_weights), p_all = std::move(p_all),
               p_pos = std::move(p_pos)](Tape& t, std::size_t self) {
                if (!t.needs(scores)) return;
                const double g = t.nodes_[self].adjoint(0, 0);
                Matrix& ds = t.adj(scores);
                for (std::size_t r = 0; r < ds.rows(); ++r) {
                  if (weights[r] == 0.0) continue;
                  const double wg = weights[r] * g;
                  for (std::size_t c = 0; c < ds.cols(); ++c)
                    ds(r, c) += wg * (p_all(r, c) - p_pos(r, c));
                }
              });
}

Tape::Var Tape::weighted_sum(std::span<const Var> scalars, std::span<const double> weights) {
  if (scalars.size() != weights.size()) throw DimensionError("weighted_sum: length mismatch");
  double total = 0.0;
  bool ng = false;
  for (std::size_t k = 0; k < scalars.size(); ++k) {
    total += weights[k] * scalar(scalars[k]);
    ng = ng || needs(scalars[k]);
  }
  std::vector<Var> ids(scalars.begin(), scalars.end());
  std::vector<double> w(weights.begin(), weights.end());
  return push(Matrix(1, 1, total), ng, [ids, w](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].adjoint(0, 0);
    for (std::size_t k = 0; k < ids.size(); ++k)
      if (t.needs(ids[k])) t.adj(ids[k])(0, 0) += w[k] * g;
  });
}

void Tape::backward(Var output) {
  const Matrix& out = value(output);
  if (out.rows() != 1 || out.cols() != 1) {
    throw DimensionError("backward(): output must be 1x1, got " + out.shape_str());
  }
  backward(output, Matrix(1, 1, 1.0));
}

void Tape::backward(Var output, const Matrix& seed) {
  const Matrix& out = value(output);
  if (seed.rows() != out.rows() || seed.cols() != out.cols()) {
    throw DimensionError("backward(): seed " + seed.shape_str() + " vs output " + out.shape_str());
  }
  for (auto& node : nodes_) node.adjoint = Matrix(node.value.rows(), node.value.cols());
  nodes_[output.id].adjoint = seed;
  for (std::size_t id = output.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.pullback && node.needs_grad) node.pullback(*this, id);
  }
}

}  // namespace mca
