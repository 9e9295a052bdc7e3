// SPDX-License-Identifier: Apache-2.0

#include "mca/gradient_suite.hpp"

#include <chrono>
#include <functional>
#include <random>

#include "mca/encoders.hpp"
#include "mca/maa.hpp"
#include "mca/numerics/tape.hpp"

namespace mca {

namespace {

using Builder = std::function<Tape::Var(Tape&, const std::vector<Tape::Var>&)>;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = normal(rng);
  return m;
}

std::vector<double> flatten(const std::vector<Matrix>& mats) {
  std::vector<double> out;
  for (const auto& m : mats) out.insert(out.end(), m.data().begin(), m.data().end());
  return out;
}

std::vector<Matrix> unflatten(std::span<const double> x, const std::vector<Matrix>& like) {
  std::vector<Matrix> out;
  std::size_t at = 0;
  for (const auto& m : like) {
    Matrix copy(m.rows(), m.cols());
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(at),
              x.begin() + static_cast<std::ptrdiff_t>(at + m.size()), copy.data().begin());
    at += m.size();
    out.push_back(std::move(copy));
  }
  return out;
}

GradientCase check_builder(std::string name, const std::vector<Matrix>& leaves,
                           const Builder& build, double tol) {
  const auto start = std::chrono::steady_clock::now();
  LossWithGradient fn = [&](std::span<const double> x, std::vector<double>* grad) {
    Tape tape;
    std::vector<Tape::Var> vars;
    for (auto& m : unflatten(x, leaves)) vars.push_back(tape.leaf(std::move(m)));
    auto loss = build(tape, vars);
    if (grad) {
      tape.backward(loss);
      std::vector<Matrix> grads;
      for (auto v : vars) grads.push_back(tape.grad(v));
      *grad = flatten(grads);
    }
    return tape.scalar(loss);
  };
  GradientCase out{std::move(name), check_gradient(fn, flatten(leaves), tol), 0.0};
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<int> random_labels(std::size_t n, std::size_t classes, std::mt19937_64& rng,
                               bool allow_missing) {
  std::uniform_int_distribution<int> pick(allow_missing ? -1 : 0, static_cast<int>(classes) - 1);
  std::vector<int> out(n);
  for (int& y : out) y = pick(rng);
  if (allow_missing) out.front() = 0;  // keep at least one applicable row
  return out;
}

}  // namespace

std::vector<GradientCase> run_gradient_suite(std::uint64_t seed, double tol,
                                             const GradientSuiteShape& shape) {
  std::mt19937_64 rng(seed);
  const std::size_t b = shape.batch, k = shape.classes, m = shape.modalities, d = shape.emb_dim;
  const std::size_t rows = b * m;
  const double tau = shape.tau;
  std::vector<GradientCase> out;

  {
    const auto labels = random_labels(rows, k, rng, true);
    const std::vector<Matrix> leaves{random_matrix(rows, d, rng), random_matrix(k, d, rng)};
    out.push_back(check_builder(
        "center", leaves,
        [&](Tape& t, const std::vector<Tape::Var>& v) {
          return center_loss(t, t.l2_normalize_rows(v[0]), labels, t.l2_normalize_rows(v[1]),
                             tau);
        },
        tol));
  }

  GroupMemory memory(k, m, 3, d);
  for (std::size_t c = 0; c + 1 < k; ++c) {  // last class left empty to exercise skipping
    for (std::size_t j = 0; j < m; ++j) {
      for (int e = 0; e < 2; ++e) {
        const auto f = l2_normalize(random_matrix(1, d, rng).row(0));
        memory.push(c, j, f, 0);
      }
    }
  }
  const auto snapshot = memory.snapshot();
  {
    const auto labels = random_labels(rows, k, rng, true);
    const std::vector<Matrix> leaves{random_matrix(rows, d, rng)};
    out.push_back(check_builder(
        "group", leaves,
        [&](Tape& t, const std::vector<Tape::Var>& v) {
          return group_loss(t, t.l2_normalize_rows(v[0]), labels, snapshot, tau);
        },
        tol));
  }
  {
    std::vector<Matrix> leaves;
    for (std::size_t j = 0; j < m; ++j) leaves.push_back(random_matrix(b, d, rng));
    out.push_back(check_builder(
        "instance", leaves,
        [&](Tape& t, const std::vector<Tape::Var>& v) {
          std::vector<Tape::Var> views;
          for (auto var : v) views.push_back(t.l2_normalize_rows(var));
          return instance_loss(t, views, tau);
        },
        tol));
  }
  {
    const auto labels = random_labels(rows, k, rng, true);
    const std::vector<Matrix> leaves{random_matrix(rows, d, rng), random_matrix(d, k, rng),
                                     random_matrix(1, k, rng)};
    out.push_back(check_builder(
        "classifier", leaves,
        [&](Tape& t, const std::vector<Tape::Var>& v) {
          auto logits = t.affine(t.l2_normalize_rows(v[0]), v[1], v[2]);
          return classifier_loss(t, logits, labels);
        },
        tol));
  }

  {
    const auto start = std::chrono::steady_clock::now();
    ModelShape model_shape;
    for (std::size_t j = 0; j < m; ++j) model_shape.input_dims.push_back(static_cast<int>(5 + j));
    model_shape.hidden = 6;
    model_shape.emb_dim = static_cast<int>(d);
    model_shape.num_classes = static_cast<int>(k);
    const ModelState base = init_model(model_shape, rng());
    std::vector<Matrix> features;
    for (std::size_t j = 0; j < m; ++j) {
      features.push_back(random_matrix(b, static_cast<std::size_t>(model_shape.input_dims[j]), rng));
    }
    // Mixed routing: clean, corrected (group only) and unresolved views.
    BatchRouting routing = BatchRouting::unlabeled(b, m);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(k) - 1);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < b; ++i) {
        const int y = pick(rng);
        switch ((i + j) % 3) {
          case 0:
            routing.center[j][i] = routing.group[j][i] = routing.classifier[j][i] = y;
            break;
          case 1:
            routing.group[j][i] = y;
            break;
          default:
            break;
        }
      }
    }
    AlignmentConfig config;
    config.tau_c = config.tau_m = tau;
    config.lambda = 0.7;

    std::vector<Matrix> leaves;
    for (const Matrix* p : base.parameters()) leaves.push_back(*p);
    LossWithGradient fn = [&](std::span<const double> x, std::vector<double>* grad) {
      ModelState model = base;
      auto values = unflatten(x, leaves);
      auto params = model.parameters();
      for (std::size_t p = 0; p < params.size(); ++p) *params[p] = std::move(values[p]);
      BatchLoss loss = total_loss(model, features, routing, memory, config);
      if (grad) *grad = flatten(loss.gradients);
      return loss.breakdown.total;
    };
    GradientCase c{"total", check_gradient(fn, flatten(leaves), tol), 0.0};
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace mca
