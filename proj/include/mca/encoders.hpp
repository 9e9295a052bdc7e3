// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mca/numerics/adam.hpp"
#include "mca/numerics/matrix.hpp"
#include "mca/numerics/tape.hpp"

namespace mca {

struct ModelShape {
  std::vector<int> input_dims;  // one per modality
  int hidden = 64;
  int emb_dim = 32;
  int num_classes = 10;
};

/// Two affine layers with a ReLU between: d_j -> hidden -> emb_dim.
struct EncoderParams {
  Matrix w1, b1;
  Matrix w2, b2;
};

/// Shared head emb_dim -> K.
struct ClassifierParams {
  Matrix weight, bias;
};

/// Everything the optimizer touches. Adam buffers follow parameters() order.
struct ModelState {
  std::vector<EncoderParams> encoders;
  ClassifierParams classifier;
  Matrix centers;  // [K x emb_dim], unit rows
  std::vector<AdamState> optimizer;

  /// Stable parameter order: per modality (w1, b1, w2, b2), classifier
  /// (weight, bias), centers.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;

  std::size_t num_modalities() const noexcept { return encoders.size(); }
  std::size_t emb_dim() const noexcept { return centers.cols(); }
  std::size_t num_classes() const noexcept { return centers.rows(); }
};

/// He-scaled normal weights, zero biases, random unit centers. Deterministic in seed.
ModelState init_model(const ModelShape& shape, std::uint64_t seed);

/// Differentiable handles for one encoder inside a tape.
struct EncoderVars {
  Tape::Var w1, b1, w2, b2;
};

/// Tape route: unit-norm embeddings [B x emb_dim].
Tape::Var embed(Tape& tape, const EncoderVars& params, Tape::Var batch);

/// Value route. Throws NumericError naming the layer when an activation goes non-finite.
Matrix embed(const ModelState& model, std::size_t modality, const Matrix& batch);

/// Softmax probabilities [B x K].
Matrix predict(const ClassifierParams& classifier, const Matrix& embeddings);

/// Versioned binary checkpoint of all parameters with a shape manifest.
void save_checkpoint(const std::filesystem::path& path, const ModelState& model);
/// Loads into an already-shaped model; every manifest entry must match.
void load_checkpoint(const std::filesystem::path& path, ModelState& model);

}  // namespace mca
