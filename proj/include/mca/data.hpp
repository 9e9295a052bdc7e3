// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "mca/numerics/matrix.hpp"

namespace mca {

/// Shape and noise parameters of a synthetic multimodal benchmark.
struct DatasetSpec {
  int num_classes = 10;
  int n_train = 500;
  int n_test = 200;
  int num_modalities = 2;
  int latent_dim = 16;
  std::vector<int> ambient_dims = {32, 24};
  double class_separation = 1.0;
  double within_class_sigma = 0.35;
  double modality_noise_sigma = 0.15;
  std::uint64_t seed = 1;

  /// Throws ConfigError naming the first offending field.
  void validate() const;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

/// One split of objects. Row i of every features[j] is the same object.
struct Split {
  std::vector<int> true_labels;
  std::vector<int> given_labels;
  std::vector<Matrix> features;  // per modality, [N x d_j]
  Matrix latents;                // [N x L]; empty after a file round trip

  std::size_t size() const noexcept { return true_labels.size(); }
  std::size_t corrupted_count() const;
};

struct MultimodalDataset {
  DatasetSpec spec;
  Matrix prototypes;  // [K x L]; empty after a file round trip
  Split train;
  Split test;
  double noise_rate = 0.0;
  std::uint64_t noise_seed = 0;
};

/// Deterministic in spec.seed. Labels are balanced (object i gets class i mod K
/// before a seeded shuffle), so every class has a training object.
MultimodalDataset generate(const DatasetSpec& spec);

/// Copy of the dataset whose training given-labels are independently flipped
/// with probability rate to a uniformly chosen different class. The flipped
/// label is per object and shared by all modalities. Test labels are untouched.
MultimodalDataset inject_symmetric_noise(const MultimodalDataset& dataset, double rate,
                                         std::uint64_t seed);

/// Index of the nearest prototype (squared Euclidean, lowest index on ties).
int nearest_prototype(const Matrix& prototypes, std::span<const double> point);

/// Line-oriented text format; see README ("Dataset files").
void write_dataset(std::ostream& out, const MultimodalDataset& dataset);
MultimodalDataset read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const MultimodalDataset& dataset);
MultimodalDataset load_dataset(const std::filesystem::path& path);

}  // namespace mca
