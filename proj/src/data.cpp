// SPDX-License-Identifier: Apache-2.0

#include "mca/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "mca/errors.hpp"

namespace mca {

namespace {

constexpr const char* kMagic = "mca-dataset";
constexpr int kFormatVersion = 1;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

Matrix gaussian(std::size_t rows, std::size_t cols, double sigma, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  if (sigma == 0.0) return m;
  std::normal_distribution<double> dist(0.0, sigma);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

Split make_split(const DatasetSpec& spec, const Matrix& prototypes,
                 const std::vector<Matrix>& maps, int count, std::mt19937_64& rng) {
  const auto k = static_cast<std::size_t>(spec.num_classes);
  const auto l = static_cast<std::size_t>(spec.latent_dim);
  const auto n = static_cast<std::size_t>(count);

  Split split;
  split.true_labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) split.true_labels[i] = static_cast<int>(i % k);
  std::shuffle(split.true_labels.begin(), split.true_labels.end(), rng);
  split.given_labels = split.true_labels;

  split.latents = gaussian(n, l, spec.within_class_sigma, rng);
  for (std::size_t i = 0; i < n; ++i) {
    auto proto = prototypes.row(static_cast<std::size_t>(split.true_labels[i]));
    auto u = split.latents.row(i);
    for (std::size_t c = 0; c < l; ++c) u[c] += proto[c];
  }

  for (std::size_t j = 0; j < maps.size(); ++j) {
    Matrix x = matmul_nt(split.latents, maps[j]);
    Matrix noise = gaussian(n, maps[j].rows(), spec.modality_noise_sigma, rng);
    auto xd = x.data();
    auto nd = noise.data();
    for (std::size_t t = 0; t < xd.size(); ++t) xd[t] = std::tanh(xd[t]) + nd[t];
    split.features.push_back(std::move(x));
  }
  return split;
}

void write_double(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

template <typename T>
T expect_field(std::istream& in, const std::string& key) {
  std::string name;
  T value{};
  if (!(in >> name) || name != key || !(in >> value)) {
    throw ConfigError(key, "dataset header: missing or malformed field");
  }
  return value;
}

void write_split(std::ostream& out, const char* tag, const Split& split) {
  for (std::size_t i = 0; i < split.size(); ++i) {
    out << tag << ' ' << split.true_labels[i] << ' ' << split.given_labels[i];
    for (const auto& f : split.features) {
      for (double v : f.row(i)) {
        out << ' ';
        write_double(out, v);
      }
    }
    out << '\n';
  }
}

void read_split(std::istream& in, const char* tag, const DatasetSpec& spec, int count,
                Split& split) {
  const auto m = static_cast<std::size_t>(spec.num_modalities);
  split.features.clear();
  for (std::size_t j = 0; j < m; ++j) {
    split.features.emplace_back(static_cast<std::size_t>(count),
                                static_cast<std::size_t>(spec.ambient_dims[j]));
  }
  split.true_labels.resize(static_cast<std::size_t>(count));
  split.given_labels.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    std::string row_tag;
    in >> row_tag;
    if (row_tag != tag) {
      throw ConfigError("rows", "expected '" + std::string(tag) + "' row " + std::to_string(i));
    }
    const auto row = static_cast<std::size_t>(i);
    in >> split.true_labels[row] >> split.given_labels[row];
    for (auto& f : split.features)
      for (double& v : f.row(row)) in >> v;
    if (!in) throw ConfigError("rows", "truncated " + std::string(tag) + " row " + std::to_string(i));
    for (int label : {split.true_labels[row], split.given_labels[row]}) {
      if (label < 0 || label >= spec.num_classes) {
        throw ConfigError("rows", "label out of range in " + std::string(tag) + " row " +
                                      std::to_string(i));
      }
    }
  }
}

}  // namespace

void DatasetSpec::validate() const {
  if (num_classes < 2) throw ConfigError("num_classes", "must be >= 2");
  if (num_modalities < 2) throw ConfigError("num_modalities", "must be >= 2");
  if (latent_dim < 1) throw ConfigError("latent_dim", "must be >= 1");
  if (static_cast<int>(ambient_dims.size()) != num_modalities) {
    throw ConfigError("ambient_dims", "needs one entry per modality");
  }
  for (int d : ambient_dims)
    if (d < 1) throw ConfigError("ambient_dims", "every dimension must be >= 1");
  if (n_train < num_classes) throw ConfigError("n_train", "must be >= num_classes");
  if (n_test < 1) throw ConfigError("n_test", "must be >= 1");
  if (!(class_separation >= 0.0)) throw ConfigError("class_separation", "must be >= 0");
  if (!(within_class_sigma >= 0.0)) throw ConfigError("within_class_sigma", "must be >= 0");
  if (!(modality_noise_sigma >= 0.0)) throw ConfigError("modality_noise_sigma", "must be >= 0");
}

std::size_t Split::corrupted_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < size(); ++i) n += given_labels[i] != true_labels[i] ? 1 : 0;
  return n;
}

MultimodalDataset generate(const DatasetSpec& spec) {
  spec.validate();
  const auto k = static_cast<std::size_t>(spec.num_classes);
  const auto l = static_cast<std::size_t>(spec.latent_dim);

  // Prototype differences are N(0, s^2 I), so pairwise distance ~ s * sqrt(L).
  auto proto_rng = stream(spec.seed, 1);
  MultimodalDataset ds;
  ds.spec = spec;
  ds.prototypes = gaussian(k, l, spec.class_separation / std::sqrt(2.0), proto_rng);

  auto map_rng = stream(spec.seed, 2);
  std::vector<Matrix> maps;
  for (int d : spec.ambient_dims) {
    maps.push_back(gaussian(static_cast<std::size_t>(d), l, 1.0 / std::sqrt(double(l)), map_rng));
  }

  auto train_rng = stream(spec.seed, 3);
  ds.train = make_split(spec, ds.prototypes, maps, spec.n_train, train_rng);
  auto test_rng = stream(spec.seed, 4);
  ds.test = make_split(spec, ds.prototypes, maps, spec.n_test, test_rng);
  return ds;
}

MultimodalDataset inject_symmetric_noise(const MultimodalDataset& dataset, double rate,
                                         std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("noise_rate", "must lie in [0, 1]");
  MultimodalDataset out = dataset;
  out.noise_rate = rate;
  out.noise_seed = seed;
  auto rng = stream(seed, 5);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> other(0, dataset.spec.num_classes - 2);
  auto& split = out.train;
  for (std::size_t i = 0; i < split.size(); ++i) {
    // Both draws always happen so the stream position is independent of rate.
    const double u = coin(rng);
    const int r = other(rng);
    const int truth = split.true_labels[i];
    split.given_labels[i] = u < rate ? (r >= truth ? r + 1 : r) : truth;
  }
  return out;
}

int nearest_prototype(const Matrix& prototypes, std::span<const double> point) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < prototypes.rows(); ++k) {
    auto p = prototypes.row(k);
    double d = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) d += (p[c] - point[c]) * (p[c] - point[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

void write_dataset(std::ostream& out, const MultimodalDataset& ds) {
  const auto& s = ds.spec;
  out << kMagic << " v" << kFormatVersion << '\n';
  out << "num_classes " << s.num_classes << '\n';
  out << "n_train " << s.n_train << '\n';
  out << "n_test " << s.n_test << '\n';
  out << "num_modalities " << s.num_modalities << '\n';
  out << "latent_dim " << s.latent_dim << '\n';
  out << "ambient_dims";
  for (int d : s.ambient_dims) out << ' ' << d;
  out << '\n';
  out << "class_separation ";
  write_double(out, s.class_separation);
  out << "\nwithin_class_sigma ";
  write_double(out, s.within_class_sigma);
  out << "\nmodality_noise_sigma ";
  write_double(out, s.modality_noise_sigma);
  out << "\nseed " << s.seed << '\n';
  out << "noise_rate ";
  write_double(out, ds.noise_rate);
  out << "\nnoise_seed " << ds.noise_seed << '\n';
  out << "end_header\n";
  write_split(out, "train", ds.train);
  write_split(out, "test", ds.test);
}

MultimodalDataset read_dataset(std::istream& in) {
  std::string magic, version;
  in >> magic >> version;
  if (magic != kMagic) throw ConfigError("header", "not an mca dataset file");
  if (version != "v" + std::to_string(kFormatVersion)) {
    throw ConfigError("header", "unsupported dataset format version " + version);
  }
  MultimodalDataset ds;
  auto& s = ds.spec;
  s.num_classes = expect_field<int>(in, "num_classes");
  s.n_train = expect_field<int>(in, "n_train");
  s.n_test = expect_field<int>(in, "n_test");
  s.num_modalities = expect_field<int>(in, "num_modalities");
  s.latent_dim = expect_field<int>(in, "latent_dim");
  std::string key;
  in >> key;
  if (key != "ambient_dims" || s.num_modalities < 1) {
    throw ConfigError("ambient_dims", "dataset header: missing or malformed field");
  }
  s.ambient_dims.assign(static_cast<std::size_t>(s.num_modalities), 0);
  for (int& d : s.ambient_dims) in >> d;
  s.class_separation = expect_field<double>(in, "class_separation");
  s.within_class_sigma = expect_field<double>(in, "within_class_sigma");
  s.modality_noise_sigma = expect_field<double>(in, "modality_noise_sigma");
  s.seed = expect_field<std::uint64_t>(in, "seed");
  ds.noise_rate = expect_field<double>(in, "noise_rate");
  ds.noise_seed = expect_field<std::uint64_t>(in, "noise_seed");
  in >> key;
  if (key != "end_header") throw ConfigError("header", "missing end_header");
  s.validate();
  read_split(in, "train", s, s.n_train, ds.train);
  read_split(in, "test", s, s.n_test, ds.test);
  return ds;
}

void save_dataset(const std::filesystem::path& path, const MultimodalDataset& dataset) {
  std::ofstream out(path);
  if (!out) throw ConfigError("path", "cannot open " + path.string() + " for writing");
  write_dataset(out, dataset);
}

MultimodalDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("path", "cannot open " + path.string());
  return read_dataset(in);
}

}  // namespace mca
