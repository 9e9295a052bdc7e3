// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "mca/encoders.hpp"
#include "mca/errors.hpp"
#include "mca/gradient_suite.hpp"
#include "mca/maa.hpp"

using namespace mca;

namespace {

Matrix random_unit(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (double& v : m.data()) v = n(rng);
  return l2_normalize_rows(m);
}

ModelState tiny_model(std::uint64_t seed) {
  ModelShape s;
  s.input_dims = {5, 4};
  s.hidden = 6;
  s.emb_dim = 4;
  s.num_classes = 3;
  return init_model(s, seed);
}

std::vector<Matrix> tiny_batch(std::size_t b, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Matrix> out{Matrix(b, 5), Matrix(b, 4)};
  for (auto& m : out)
    for (double& v : m.data()) v = n(rng);
  return out;
}

}  // namespace

TEST_CASE("center loss examples") {
  // Embedding orthogonal to both centers: uniform softmax, ln 2.
  const Matrix z = Matrix::from_rows({{0.0, 0.0, 1.0}});
  const Matrix centers = Matrix::from_rows({{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}});
  CHECK(center_loss(z, std::vector<int>{1}, centers, 0.1).value ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // z on its own center, the other center orthogonal, tau 1.
  const Matrix on = Matrix::from_rows({{1.0, 0.0, 0.0}});
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  CHECK(std::abs(center_loss(on, std::vector<int>{0}, centers, 1.0).value - expected) <= 1e-6);
  CHECK(expected == doctest::Approx(0.313262).epsilon(1e-6));
}

TEST_CASE("center loss with nothing applicable is zero") {
  const auto r = center_loss(Matrix(2, 3, 0.5), std::vector<int>{-1, -1},
                             Matrix::identity(3), 0.1);
  CHECK(r.value == 0.0);
  CHECK(r.applicable == 0);
}

TEST_CASE("center loss drops when an embedding moves toward its center") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix centers = random_unit(3, 4, rng);
    const Matrix z = random_unit(1, 4, rng);
    const auto c = centers.row(1);
    // slerp(z -> c, 0.1)
    double cos_t = 0.0;
    for (std::size_t i = 0; i < 4; ++i) cos_t += z(0, i) * c[i];
    cos_t = std::clamp(cos_t, -1.0, 1.0);
    const double theta = std::acos(cos_t);
    if (theta < 1e-6 || theta > 3.14) continue;
    Matrix moved(1, 4);
    for (std::size_t i = 0; i < 4; ++i) {
      moved(0, i) = (std::sin(0.9 * theta) * z(0, i) + std::sin(0.1 * theta) * c[i]) / std::sin(theta);
    }
    const std::vector<int> y{1};
    // Decrease holds whenever the other centers do not sit closer along the path.
    const double before = center_loss(z, y, centers, 0.5).value;
    const double after = center_loss(moved, y, centers, 0.5).value;
    double other_gain = 0.0;
    for (std::size_t k : {0u, 2u}) {
      double s0 = 0.0, s1 = 0.0;
      for (std::size_t i = 0; i < 4; ++i) {
        s0 += z(0, i) * centers(k, i);
        s1 += moved(0, i) * centers(k, i);
      }
      other_gain = std::max(other_gain, s1 - s0);
    }
    if (other_gain <= 0.0) CHECK(after < before);
  }
}

TEST_CASE("group loss examples") {
  GroupMemory single(3, 2, 4, 2);
  single.push(1, 0, std::vector<double>{0.6, 0.8}, 1);
  CHECK(group_loss(Matrix::from_rows({{1.0, 0.0}}), std::vector<int>{1}, single, 0.1).value ==
        doctest::Approx(0.0));

  // Two groups, one entry each, equally similar to z.
  GroupMemory two(2, 1, 4, 2);
  two.push(0, 0, std::vector<double>{0.6, 0.8}, 1);
  two.push(1, 0, std::vector<double>{0.6, -0.8}, 1);
  CHECK(group_loss(Matrix::from_rows({{1.0, 0.0}}), std::vector<int>{0}, two, 0.1).value ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("group loss skips labels absent from memory") {
  GroupMemory memory(3, 1, 2, 2);
  memory.push(0, 0, std::vector<double>{1.0, 0.0}, 1);
  const auto r = group_loss(Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}}), std::vector<int>{0, 2},
                            memory, 0.1);
  CHECK(r.applicable == 1);
  CHECK(r.skipped == 1);
}

TEST_CASE("instance loss examples") {
  std::mt19937_64 rng(1);
  const std::vector<Matrix> one{random_unit(1, 3, rng), random_unit(1, 3, rng)};
  CHECK(instance_loss(one, 0.1).value == doctest::Approx(0.0));

  const Matrix same = Matrix::from_rows({{1.0, 0.0}, {1.0, 0.0}});
  const std::vector<Matrix> views{same, same};
  CHECK(instance_loss(views, 0.1).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("instance loss is invariant under a shared batch permutation") {
  std::mt19937_64 rng(2);
  const std::vector<Matrix> views{random_unit(5, 4, rng), random_unit(5, 4, rng)};
  const std::vector<std::size_t> perm{4, 2, 0, 3, 1};
  const std::vector<Matrix> shuffled{gather_rows(views[0], perm), gather_rows(views[1], perm)};
  CHECK(instance_loss(views, 0.1).value ==
        doctest::Approx(instance_loss(shuffled, 0.1).value).epsilon(1e-12));
}

TEST_CASE("classifier loss examples") {
  const Matrix uniform(3, 10, 0.1);
  CHECK(std::abs(classifier_loss(uniform, std::vector<int>{0, 4, 9}).value - std::log(10.0)) <=
        1e-9);
  const Matrix onehot = Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}});
  CHECK(classifier_loss(onehot, std::vector<int>{1, 0}).value == 0.0);
}

TEST_CASE("classifier gradient with respect to logits is p minus onehot") {
  const Matrix logits = Matrix::from_rows({{0.3, -1.2, 2.0}, {0.0, 0.5, -0.5}});
  const std::vector<int> labels{2, 0};
  Tape t;
  auto l = t.leaf(logits);
  t.backward(classifier_loss(t, l, labels));
  const Matrix p = softmax_rows(logits);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      const double expected = (p(r, c) - (static_cast<int>(c) == labels[r] ? 1.0 : 0.0)) / 2.0;
      CHECK(t.grad(l)(r, c) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("group memory evicts FIFO and respects capacity") {
  GroupMemory memory(2, 2, 2, 2);
  memory.push(0, 1, std::vector<double>{1.0, 0.0}, 1);
  memory.push(0, 1, std::vector<double>{0.0, 1.0}, 2);
  memory.push(0, 1, std::vector<double>{-1.0, 0.0}, 3);
  const auto entries = memory.entries(0, 1);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0] == std::vector<double>{0.0, 1.0});
  CHECK(entries[1] == std::vector<double>{-1.0, 0.0});

  std::mt19937_64 rng(5);
  std::size_t previous = memory.total();
  for (int step = 0; step < 40; ++step) {
    const Matrix f = random_unit(1, 2, rng);
    memory.push(static_cast<std::size_t>(step % 2), static_cast<std::size_t>(step / 2 % 2), f.row(0), step);
    CHECK(memory.total() >= previous);
    CHECK(memory.total() <= memory.capacity());
    previous = memory.total();
  }
  CHECK(memory.total() == memory.capacity());
}

TEST_CASE("unresolved views never enter memory") {
  GroupMemory memory(3, 2, 4, 2);
  const std::vector<Matrix> emb{Matrix::from_rows({{1.0, 0.0}}), Matrix::from_rows({{0.0, 1.0}})};
  memory_push(memory, emb, BatchRouting::unlabeled(1, 2), 1);
  CHECK(memory.total() == 0);
  memory_push(memory, emb, BatchRouting::all_clean(std::vector<int>{2}, 2), 1);
  CHECK(memory.size(2, 0) == 1);
  CHECK(memory.size(2, 1) == 1);
}

TEST_CASE("push then self-query gives zero group loss") {
  GroupMemory memory(3, 1, 4, 3);
  std::mt19937_64 rng(3);
  const Matrix z = random_unit(1, 3, rng);
  memory.push(2, 0, z.row(0), 1);
  CHECK(group_loss(z, std::vector<int>{2}, memory, 0.1).value == doctest::Approx(0.0));
}

TEST_CASE("routing from verdicts follows the adaptive rule") {
  HistoryBank bank(3, 2, 2);
  // Sample 0 clean (agrees with 1), sample 1 corrected to 2, sample 2 unresolved.
  for (std::size_t j = 0; j < 2; ++j) {
    bank.push(0, j, 1, 1);
    bank.push(1, j, 2, 1);
  }
  bank.push(2, 0, 0, 1);
  bank.push(2, 1, 1, 1);
  const Partition p = divide(bank, std::vector<int>{1, 0, 0});
  const std::vector<std::size_t> rows{0, 1, 2};
  const auto r = BatchRouting::from_verdicts(rows, p);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(r.center[j] == std::vector<int>{1, -1, -1});
    CHECK(r.group[j] == std::vector<int>{1, 2, -1});
    CHECK(r.classifier[j] == std::vector<int>{1, -1, -1});
  }
}

TEST_CASE("an all-unresolved batch trains on the instance loss alone") {
  std::mt19937_64 rng(4);
  const ModelState model = tiny_model(3);
  const auto batch = tiny_batch(4, rng);
  GroupMemory memory(3, 2, 4, 4);
  memory.push(0, 0, random_unit(1, 4, rng).row(0), 0);
  const auto out = total_loss(model, batch, BatchRouting::unlabeled(4, 2), memory, AlignmentConfig{});
  CHECK(out.breakdown.center == 0.0);
  CHECK(out.breakdown.group == 0.0);
  CHECK(out.breakdown.classifier == 0.0);
  CHECK(out.breakdown.total == out.breakdown.instance);
  CHECK(out.breakdown.instance > 0.0);
}

TEST_CASE("lambda zero drops the classifier term exactly") {
  std::mt19937_64 rng(6);
  const ModelState model = tiny_model(4);
  const auto batch = tiny_batch(4, rng);
  GroupMemory memory(3, 2, 4, 4);
  for (std::size_t k = 0; k < 3; ++k) memory.push(k, 1, random_unit(1, 4, rng).row(0), 0);
  AlignmentConfig cfg;
  cfg.lambda = 0.0;
  const auto r = BatchRouting::all_clean(std::vector<int>{0, 1, 2, 1}, 2);
  const auto b = total_loss(model, batch, r, memory, cfg).breakdown;
  CHECK(b.classifier > 0.0);
  CHECK(b.total == b.center + b.group + b.instance);
}

TEST_CASE("total gradient is the sum of the component gradients") {
  std::mt19937_64 rng(7);
  const ModelState model = tiny_model(5);
  const auto batch = tiny_batch(4, rng);
  GroupMemory memory(3, 2, 4, 4);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t j = 0; j < 2; ++j) memory.push(k, j, random_unit(1, 4, rng).row(0), 0);
  const auto routing = BatchRouting::all_clean(std::vector<int>{0, 2, 1, 1}, 2);
  AlignmentConfig all;
  all.lambda = 0.6;
  const auto total = total_loss(model, batch, routing, memory, all);

  std::vector<Matrix> summed;
  for (int component = 0; component < 4; ++component) {
    AlignmentConfig one = all;
    one.enable_center = component == 0;
    one.enable_group = component == 1;
    one.enable_instance = component == 2;
    one.enable_classifier = component == 3;
    const auto part = total_loss(model, batch, routing, memory, one);
    if (summed.empty()) {
      summed = part.gradients;
    } else {
      for (std::size_t p = 0; p < summed.size(); ++p)
        for (std::size_t i = 0; i < summed[p].size(); ++i)
          summed[p].data()[i] += part.gradients[p].data()[i];
    }
  }
  for (std::size_t p = 0; p < summed.size(); ++p)
    for (std::size_t i = 0; i < summed[p].size(); ++i)
      CHECK(std::abs(summed[p].data()[i] - total.gradients[p].data()[i]) <= 1e-10);
}

TEST_CASE("every component is non-negative on random batches") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelState model = tiny_model(static_cast<std::uint64_t>(trial));
    const auto batch = tiny_batch(6, rng);
    GroupMemory memory(3, 2, 3, 4);
    for (std::size_t k = 0; k < 3; ++k) memory.push(k, 0, random_unit(1, 4, rng).row(0), 0);
    std::uniform_int_distribution<int> pick(-1, 2);
    BatchRouting r = BatchRouting::unlabeled(6, 2);
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t i = 0; i < 6; ++i) r.center[j][i] = r.group[j][i] = r.classifier[j][i] = pick(rng);
    const auto b = total_loss(model, batch, r, memory, AlignmentConfig{}).breakdown;
    CHECK(b.center >= 0.0);
    CHECK(b.group >= 0.0);
    CHECK(b.instance >= 0.0);
    CHECK(b.classifier >= 0.0);
  }
}

TEST_CASE("gradient suite passes on several seeds") {
  for (std::uint64_t seed : {1, 2, 3, 4}) {
    for (const auto& c : run_gradient_suite(seed)) {
      CHECK_MESSAGE(c.report.passed, c.name << " seed " << seed << " err "
                                            << c.report.max_relative_error << " "
                                            << c.report.diagnostic);
    }
  }
}
