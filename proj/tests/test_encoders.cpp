// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "mca/encoders.hpp"
#include "mca/errors.hpp"
#include "mca/maa.hpp"
#include "mca/numerics/gradcheck.hpp"

using namespace mca;

namespace {

ModelShape small_shape() {
  ModelShape s;
  s.input_dims = {5, 4};
  s.hidden = 6;
  s.emb_dim = 3;
  s.num_classes = 4;
  return s;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (double& v : m.data()) v = n(rng);
  return m;
}

void zero_all(ModelState& model) {
  for (Matrix* p : model.parameters()) p->fill(0.0);
}

/// Flattened parameters of one encoder; index 0..3 = w1, b1, w2, b2.
std::vector<Matrix*> encoder_params(ModelState& m, std::size_t j) {
  auto& e = m.encoders[j];
  return {&e.w1, &e.b1, &e.w2, &e.b2};
}

}  // namespace

TEST_CASE("zero parameters give zero embeddings through the eps guard") {
  ModelState model = init_model(small_shape(), 1);
  zero_all(model);
  std::mt19937_64 rng(2);
  const Matrix z = embed(model, 0, random_matrix(3, 5, rng));
  CHECK(z == Matrix(3, 3, 0.0));
}

TEST_CASE("embeddings are unit norm, pure and row-equivariant") {
  const ModelState model = init_model(small_shape(), 4);
  std::mt19937_64 rng(5);
  const Matrix x = random_matrix(6, 4, rng);
  const Matrix a = embed(model, 1, x);
  CHECK(a == embed(model, 1, x));
  for (std::size_t r = 0; r < a.rows(); ++r) CHECK(l2_norm(a.row(r)) == doctest::Approx(1.0));
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  CHECK(embed(model, 1, gather_rows(x, perm)) == gather_rows(a, perm));
}

TEST_CASE("embed rejects bad modality and non-finite input") {
  const ModelState model = init_model(small_shape(), 4);
  CHECK_THROWS_AS(embed(model, 2, Matrix(1, 5)), DimensionError);
  Matrix bad(1, 5);
  bad(0, 2) = NAN;
  CHECK_THROWS_AS(embed(model, 0, bad), NumericError);
}

TEST_CASE("predict examples") {
  ModelState model = init_model(small_shape(), 1);
  zero_all(model);
  const Matrix p = predict(model.classifier, Matrix(2, 3, 0.3));
  for (double v : p.data()) CHECK(v == doctest::Approx(0.25));

  // K=2, logits (10, -10).
  ClassifierParams head{Matrix::from_rows({{10.0, -10.0}}), Matrix(1, 2)};
  const Matrix q = predict(head, Matrix::from_rows({{1.0}}));
  CHECK(std::abs(q(0, 0) - 1.0) <= 1e-8);
  CHECK(std::abs(q(0, 1)) <= 1e-8);
}

TEST_CASE("predict permutes with its rows") {
  const ModelState model = init_model(small_shape(), 7);
  std::mt19937_64 rng(1);
  const Matrix z = random_matrix(4, 3, rng);
  const std::vector<std::size_t> perm{2, 3, 1, 0};
  CHECK(predict(model.classifier, gather_rows(z, perm)) ==
        gather_rows(predict(model.classifier, z), perm));
}

TEST_CASE("squared embedding norm has vanishing parameter gradient") {
  const ModelState base = init_model(small_shape(), 8);
  std::mt19937_64 rng(3);
  const Matrix x = random_matrix(4, 5, rng);
  auto norm_sq = [&](const ModelState& m) {
    const Matrix z = embed(m, 0, x);
    double s = 0.0;
    for (double v : z.data()) s += v * v;
    return s;
  };
  ModelState model = base;
  for (Matrix* p : encoder_params(model, 0)) {
    for (double& v : p->data()) {
      const double saved = v;
      v = saved + 1e-5;
      const double up = norm_sq(model);
      v = saved - 1e-5;
      const double down = norm_sq(model);
      v = saved;
      CHECK(std::abs((up - down) / 2e-5) <= 1e-6);
    }
  }
}

TEST_CASE("embed, predict and cross-entropy backprop match finite differences") {
  const ModelState base = init_model(small_shape(), 12);
  std::mt19937_64 rng(6);
  const Matrix x = random_matrix(4, 5, rng);
  const std::vector<int> labels{0, 3, 1, 3};

  ModelState scratch = base;
  auto params = [](ModelState& m) {
    std::vector<Matrix*> p = encoder_params(m, 0);
    p.push_back(&m.classifier.weight);
    p.push_back(&m.classifier.bias);
    return p;
  };
  std::vector<double> x0;
  for (Matrix* p : params(scratch)) x0.insert(x0.end(), p->data().begin(), p->data().end());

  LossWithGradient fn = [&](std::span<const double> flat, std::vector<double>* grad) {
    ModelState m = base;
    std::size_t at = 0;
    for (Matrix* p : params(m))
      for (double& v : p->data()) v = flat[at++];
    Tape t;
    std::vector<Tape::Var> vars;
    for (Matrix* p : params(m)) vars.push_back(t.leaf(*p));
    auto z = embed(t, EncoderVars{vars[0], vars[1], vars[2], vars[3]}, t.leaf(x, false));
    auto loss = classifier_loss(t, t.affine(z, vars[4], vars[5]), labels);
    if (grad) {
      t.backward(loss);
      grad->clear();
      for (auto v : vars) grad->insert(grad->end(), t.grad(v).data().begin(), t.grad(v).data().end());
    }
    return t.scalar(loss);
  };
  const auto report = check_gradient(fn, x0, 1e-4);
  CHECK_MESSAGE(report.passed, report.max_relative_error);
}

TEST_CASE("checkpoints round-trip and reject mismatched shapes") {
  const auto dir = std::filesystem::temp_directory_path() / "mca_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.ckpt";
  const ModelState a = init_model(small_shape(), 21);
  save_checkpoint(path, a);

  ModelState b = init_model(small_shape(), 99);
  load_checkpoint(path, b);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);

  ModelShape other = small_shape();
  other.hidden = 7;
  ModelState c = init_model(other, 1);
  CHECK_THROWS_AS(load_checkpoint(path, c), ConfigError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt", c), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("init_model is deterministic and centers are unit rows") {
  const ModelState a = init_model(small_shape(), 5);
  const ModelState b = init_model(small_shape(), 5);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);
  for (std::size_t k = 0; k < a.centers.rows(); ++k)
    CHECK(std::abs(l2_norm(a.centers.row(k)) - 1.0) <= 1e-9);
  CHECK(a.parameter_names().size() == pa.size());
}
