// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "mca/encoders.hpp"
#include "mca/mjc.hpp"
#include "mca/numerics/matrix.hpp"
#include "mca/numerics/tape.hpp"

namespace mca {

struct AlignmentConfig {
  double tau_c = 0.1;  // center temperature
  double tau_m = 0.1;  // group and instance temperature
  double lambda = 1.0;
  bool enable_center = true;
  bool enable_group = true;
  bool enable_instance = true;
  bool enable_classifier = true;
};

/// Per-class, per-modality FIFO of unit embeddings. Entries are constants
/// to the losses that read them.
class GroupMemory {
 public:
  GroupMemory(std::size_t classes, std::size_t modalities, std::size_t group_size,
              std::size_t emb_dim);

  void push(std::size_t label, std::size_t modality, std::span<const double> feature, int epoch);

  std::size_t size(std::size_t label, std::size_t modality) const;
  std::size_t total() const;
  std::size_t capacity() const noexcept { return groups_.size() * group_size_; }
  std::size_t group_size() const noexcept { return group_size_; }
  std::size_t classes() const noexcept { return classes_; }
  std::size_t modalities() const noexcept { return modalities_; }
  /// Oldest first.
  std::vector<std::vector<double>> entries(std::size_t label, std::size_t modality) const;

  struct Snapshot {
    Matrix features;          // [S x emb_dim]
    std::vector<int> labels;  // group of each row
  };
  /// Rows ordered by class, then modality, then age (oldest first).
  Snapshot snapshot() const;

 private:
  struct Entry {
    std::vector<double> feature;
    int epoch = 0;
  };
  std::size_t index(std::size_t label, std::size_t modality) const;

  std::size_t classes_;
  std::size_t modalities_;
  std::size_t group_size_;
  std::size_t emb_dim_;
  std::vector<std::deque<Entry>> groups_;
};

/// Which label each view of each batch row feeds into; -1 excludes the view.
/// Indexed [modality][row].
struct BatchRouting {
  std::vector<std::vector<int>> center;
  std::vector<std::vector<int>> group;
  std::vector<std::vector<int>> classifier;

  /// Every view treated as clean with its given label.
  static BatchRouting all_clean(std::span<const int> given_labels, std::size_t modalities);

  /// Clean views feed every label-based loss with the given label; corrected
  /// views feed only the group loss with the corrected label; unresolved views
  /// feed nothing (the instance loss is label-free).
  static BatchRouting from_verdicts(std::span<const std::size_t> rows, const Partition& partition);

  /// No labels at all; only the instance loss can see these rows.
  static BatchRouting unlabeled(std::size_t batch, std::size_t modalities);
};

/// Tape builders. Each averages over its own applicable rows and writes the
/// count through `applicable` when given. Embedding rows are stacked modality
/// major: row j*B + i is view j of object i.
Tape::Var center_loss(Tape& tape, Tape::Var embeddings, std::span<const int> labels,
                      Tape::Var centers, double tau, std::size_t* applicable = nullptr);
/// Rows whose label is negative or whose target group is empty are skipped
/// and counted in `skipped`.
Tape::Var group_loss(Tape& tape, Tape::Var embeddings, std::span<const int> labels,
                     const GroupMemory::Snapshot& memory, double tau,
                     std::size_t* applicable = nullptr, std::size_t* skipped = nullptr);
/// All M views of row i are positives for each other (self included).
Tape::Var instance_loss(Tape& tape, std::span<const Tape::Var> per_modality, double tau);
Tape::Var classifier_loss(Tape& tape, Tape::Var logits, std::span<const int> labels,
                          std::size_t* applicable = nullptr);

/// Value-and-gradient wrappers over the tape builders.
struct LossResult {
  double value = 0.0;
  std::size_t applicable = 0;
  std::size_t skipped = 0;
  std::vector<Matrix> grad_embeddings;  // per modality for instance_loss, otherwise one entry
  Matrix grad_centers;                  // center_loss only
};

LossResult center_loss(const Matrix& embeddings, std::span<const int> labels,
                       const Matrix& centers, double tau);
LossResult group_loss(const Matrix& embeddings, std::span<const int> labels,
                      const GroupMemory& memory, double tau);
LossResult instance_loss(std::span<const Matrix> per_modality, double tau);
/// Cross-entropy on probability rows; probabilities below 1e-12 are clamped
/// and counted in `skipped`. No gradient (use the tape route for training).
LossResult classifier_loss(const Matrix& probabilities, std::span<const int> labels);

/// Pushes every view whose group route is a label; unresolved views are left out.
void memory_push(GroupMemory& memory, std::span<const Matrix> embeddings,
                 const BatchRouting& routing, int epoch);

struct LossBreakdown {
  double center = 0.0;
  double group = 0.0;
  double instance = 0.0;
  double classifier = 0.0;
  double total = 0.0;
  double lambda = 1.0;
  std::size_t center_rows = 0;
  std::size_t group_rows = 0;
  std::size_t group_skipped = 0;
  std::size_t instance_rows = 0;
  std::size_t classifier_rows = 0;
};

struct BatchLoss {
  LossBreakdown breakdown;
  std::vector<Matrix> gradients;   // ModelState::parameters() order
  std::vector<Matrix> embeddings;  // per modality, forward values
};

/// total = (L_c + L_g + L_i) + lambda * L_cls with the adaptive routing
/// applied, and gradients for every model parameter.
BatchLoss total_loss(const ModelState& model, std::span<const Matrix> batch_features,
                     const BatchRouting& routing, const GroupMemory& memory,
                     const AlignmentConfig& config);

}  // namespace mca
