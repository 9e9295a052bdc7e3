// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "mca/numerics/matrix.hpp"

namespace mca {

/// Per (sample, modality) FIFO of the last `capacity` hardened predictions.
class HistoryBank {
 public:
  HistoryBank(std::size_t samples, std::size_t modalities, std::size_t capacity);

  /// Pushes argmax(predictions[j].row(i)) for every sample i and modality j.
  /// predictions[j] must be [samples x K].
  void update(int epoch, std::span<const Matrix> predictions);
  void push(std::size_t sample, std::size_t modality, int label, int epoch);

  /// Oldest first.
  const std::deque<int>& queue(std::size_t sample, std::size_t modality) const;
  std::size_t length(std::size_t sample, std::size_t modality) const;
  int last_epoch(std::size_t sample, std::size_t modality) const;
  std::size_t max_length() const;

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t samples() const noexcept { return samples_; }
  std::size_t modalities() const noexcept { return modalities_; }

 private:
  struct Slot {
    std::deque<int> labels;
    int last_epoch = -1;
  };
  std::size_t index(std::size_t sample, std::size_t modality) const;

  std::size_t samples_;
  std::size_t modalities_;
  std::size_t capacity_;
  std::vector<Slot> slots_;
};

/// Lowest index among maximal entries.
int argmax_label(std::span<const double> probabilities);

/// Most frequent label; ties go to whichever tied label occurs most recently.
/// Throws NotWarmedUpError on an empty queue.
int modal_label(const std::deque<int>& queue);
int intra_consistency(const HistoryBank& bank, std::size_t sample, std::size_t modality);

enum class CorrectionStatus { Clean, NoisyCorrected, NoisyUnresolved };

struct CorrectionVerdict {
  std::vector<int> intra_labels;  // C_i^j per contributing modality
  std::optional<int> joint;       // the agreed label, absent when the intersection is empty
  CorrectionStatus status = CorrectionStatus::Clean;
  int given_label = -1;

  /// Given label when clean, agreed label when corrected, nullopt when unresolved.
  std::optional<int> effective_label() const;
};

/// Intersects the intra-modal labels of every modality and compares the
/// result with the given label.
std::vector<CorrectionVerdict> joint_correct(const HistoryBank& bank,
                                             std::span<const int> given_labels);

/// Fraction of resolved samples whose effective label equals the true label;
/// nullopt when every sample is unresolved.
std::optional<double> correction_accuracy(std::span<const CorrectionVerdict> verdicts,
                                          std::span<const int> true_labels);

/// Which consistency terms participate in the division.
enum class ConsistencyMode {
  IntraInter,  // mode over the bank, intersected across modalities
  IntraOnly,   // mode over the bank, each modality divided on its own
  InterOnly,   // latest prediction only, intersected across modalities
};

/// Clean/noisy division for one epoch. Verdicts are kept per modality so the
/// IntraOnly ablation can route each view separately; in the joint modes all
/// modalities carry the same verdict.
struct Partition {
  std::vector<std::vector<CorrectionVerdict>> per_modality;  // [M][N]
  std::size_t clean = 0;       // objects whose every view is clean
  std::size_t noisy = 0;       // all other objects
  std::size_t unresolved = 0;  // objects with at least one unresolved view
};

Partition divide(const HistoryBank& bank, std::span<const int> given_labels,
                 ConsistencyMode mode = ConsistencyMode::IntraInter);

/// correction_accuracy pooled over every (sample, modality) verdict.
std::optional<double> correction_accuracy(const Partition& partition,
                                          std::span<const int> true_labels);

}  // namespace mca
