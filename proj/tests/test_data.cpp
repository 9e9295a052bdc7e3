// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "mca/data.hpp"
#include "mca/errors.hpp"

using namespace mca;

TEST_CASE("zero noise collapses each class to one point per modality") {
  DatasetSpec spec;
  spec.within_class_sigma = 0.0;
  spec.modality_noise_sigma = 0.0;
  const auto ds = generate(spec);
  for (std::size_t j = 0; j < 2; ++j) {
    const Matrix& x = ds.train.features[j];
    for (std::size_t a = 0; a < ds.train.size(); ++a) {
      for (std::size_t b = a + 1; b < ds.train.size(); ++b) {
        if (ds.train.true_labels[a] != ds.train.true_labels[b]) continue;
        CHECK(std::equal(x.row(a).begin(), x.row(a).end(), x.row(b).begin()));
      }
    }
  }
}

TEST_CASE("generation is deterministic in the seed") {
  DatasetSpec spec;
  spec.seed = 42;
  const auto a = generate(spec);
  const auto b = generate(spec);
  CHECK(a.train.features == b.train.features);
  CHECK(a.test.features == b.test.features);
  CHECK(a.train.true_labels == b.train.true_labels);
  CHECK(a.prototypes == b.prototypes);
  spec.seed = 43;
  CHECK_FALSE(generate(spec).train.features == a.train.features);
}

TEST_CASE("latents are nearest-prototype separable at low within-class spread") {
  DatasetSpec spec;
  spec.within_class_sigma = 0.1 * spec.class_separation;
  for (std::uint64_t seed : {1, 2, 3}) {
    spec.seed = seed;
    const auto ds = generate(spec);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
      hits += nearest_prototype(ds.prototypes, ds.train.latents.row(i)) == ds.train.true_labels[i];
    }
    CHECK(static_cast<double>(hits) / static_cast<double>(ds.train.size()) >= 0.99);
  }
}

TEST_CASE("labels are balanced and cover every class") {
  const auto ds = generate(DatasetSpec{});
  std::vector<int> counts(10, 0);
  for (int y : ds.train.true_labels) ++counts[static_cast<std::size_t>(y)];
  for (int c : counts) CHECK(c == 50);
}

TEST_CASE("spec validation names the offending field") {
  DatasetSpec spec;
  spec.n_train = 5;
  try {
    spec.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "n_train");
  }
  spec = DatasetSpec{};
  spec.num_modalities = 1;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = DatasetSpec{};
  spec.ambient_dims = {32};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = DatasetSpec{};
  spec.within_class_sigma = -1.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("noise rate 0 and 1 are exact") {
  const auto clean = generate(DatasetSpec{});
  const auto none = inject_symmetric_noise(clean, 0.0, 7);
  CHECK(none.train.given_labels == none.train.true_labels);
  const auto all = inject_symmetric_noise(clean, 1.0, 7);
  for (std::size_t i = 0; i < all.train.size(); ++i)
    CHECK(all.train.given_labels[i] != all.train.true_labels[i]);
}

TEST_CASE("noise leaves true labels, features, order and the test split alone") {
  const auto clean = generate(DatasetSpec{});
  const auto noisy = inject_symmetric_noise(clean, 0.6, 11);
  CHECK(noisy.train.true_labels == clean.train.true_labels);
  CHECK(noisy.train.features == clean.train.features);
  CHECK(noisy.test.given_labels == clean.test.given_labels);
  CHECK(noisy.test.features == clean.test.features);
  for (int y : noisy.train.given_labels) CHECK((y >= 0 && y < 10));
}

TEST_CASE("corrupted count stays inside the binomial envelope") {
  const auto clean = generate(DatasetSpec{});
  for (double rate : {0.2, 0.4, 0.6, 0.8}) {
    const double mu = 500.0 * rate;
    const double sd = std::sqrt(500.0 * rate * (1.0 - rate));
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto c = static_cast<double>(inject_symmetric_noise(clean, rate, seed).train.corrupted_count());
      CHECK(c >= mu - 4.0 * sd);
      CHECK(c <= mu + 4.0 * sd);
    }
  }
  // The worked example: rho 0.4 on 500 objects lands in [160, 240].
  const auto c = inject_symmetric_noise(clean, 0.4, 1).train.corrupted_count();
  CHECK(c >= 160);
  CHECK(c <= 240);
}

TEST_CASE("flips are spread over the other classes") {
  DatasetSpec spec;
  spec.n_train = 5000;
  const auto noisy = inject_symmetric_noise(generate(spec), 1.0, 3);
  std::vector<int> hits(10, 0);
  for (std::size_t i = 0; i < noisy.train.size(); ++i) {
    if (noisy.train.true_labels[i] == 0) ++hits[static_cast<std::size_t>(noisy.train.given_labels[i])];
  }
  CHECK(hits[0] == 0);
  for (std::size_t c = 1; c < 10; ++c) CHECK(hits[c] > 25);  // 500/9 expected each
}

TEST_CASE("train and test objects are distinct") {
  const auto ds = generate(DatasetSpec{});
  std::set<std::vector<double>> train_rows;
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    const auto r = ds.train.features[0].row(i);
    train_rows.insert({r.begin(), r.end()});
  }
  for (std::size_t i = 0; i < ds.test.size(); ++i) {
    const auto r = ds.test.features[0].row(i);
    CHECK(train_rows.count({r.begin(), r.end()}) == 0);
  }
}

TEST_CASE("dataset text format round-trips exactly") {
  DatasetSpec spec;
  spec.n_train = 30;
  spec.n_test = 12;
  const auto ds = inject_symmetric_noise(generate(spec), 0.4, 5);
  std::stringstream buf;
  write_dataset(buf, ds);
  const auto back = read_dataset(buf);
  CHECK(back.spec == ds.spec);
  CHECK(back.noise_rate == ds.noise_rate);
  CHECK(back.noise_seed == ds.noise_seed);
  CHECK(back.train.features == ds.train.features);
  CHECK(back.train.given_labels == ds.train.given_labels);
  CHECK(back.train.true_labels == ds.train.true_labels);
  CHECK(back.test.features == ds.test.features);

  std::stringstream junk("not a dataset");
  CHECK_THROWS_AS(read_dataset(junk), ConfigError);
}
