// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mca/data.hpp"
#include "mca/encoders.hpp"
#include "mca/eval.hpp"
#include "mca/maa.hpp"
#include "mca/mjc.hpp"

namespace mca {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double lr = 3e-3;
  double lr_decay = 0.1;    // multiplier applied every lr_decay_every epochs
  int lr_decay_every = 50;
  int warmup_epochs = 20;
  int history = 5;          // h
  int group_size = 8;       // D
  double tau_c = 0.5;
  double tau_m = 0.5;
  double lambda = 1.0;
  int emb_dim = 32;
  int hidden = 64;
  std::uint64_t seed = 1;

  // Ablation switches.
  bool use_intra_only = false;
  bool use_inter_only = false;
  bool enable_center = true;
  bool enable_group = true;
  bool enable_instance = true;
  bool enable_classifier = true;
  bool enable_correction = true;  // false: given labels treated clean throughout

  bool eval_train_map = true;

  void validate(std::size_t n_train) const;
  ConsistencyMode consistency_mode() const;
  AlignmentConfig alignment() const;
  double lr_at(int epoch) const;
  /// Whether any enabled loss consumes labels.
  bool needs_labels() const { return enable_center || enable_group || enable_classifier; }

  /// Everything off except the classifier, no correction.
  static TrainConfig ce_only(TrainConfig base);

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochReport {
  int epoch = 0;
  double lr = 0.0;
  bool warmup = true;
  LossBreakdown losses;  // batch means
  std::size_t clean = 0;
  std::size_t noisy = 0;
  std::size_t unresolved = 0;
  std::optional<double> correction_accuracy;
  double train_map_1to2 = 0.0;
  double train_map_2to1 = 0.0;
  double test_map_1to2 = 0.0;
  double test_map_2to1 = 0.0;
  std::uint64_t adam_steps = 0;  // per parameter group, this epoch
  double wall_seconds = 0.0;
};

/// Read-only view handed to an observer after each epoch.
struct EpochContext {
  const EpochReport& report;
  const HistoryBank& bank;
  const Partition* partition;  // division used for this epoch's batches; null during warmup
  const GroupMemory& memory;
  const ModelState& model;
};

using EpochObserver = std::function<void(const EpochContext&)>;

struct TrainingResult {
  ModelState model;
  std::vector<EpochReport> reports;
  RetrievalReport final_test;
  /// Given-label reads made by training after warmup.
  std::uint64_t post_warmup_label_reads = 0;
};

/// Warmup on given labels, then per-epoch joint correction feeding the
/// adaptive alignment losses. Deterministic in config.seed.
TrainingResult run_training(const MultimodalDataset& dataset, const TrainConfig& config,
                            const EpochObserver& observer = {});

/// Embeds a whole split, one matrix per modality.
std::vector<Matrix> embed_split(const ModelState& model, const Split& split);

/// Seed fan-out used by every multi-seed experiment: the dataset, the noise
/// stream and the trainer all derive from one run seed.
struct SeededRun {
  double noise_rate = 0.0;
  std::uint64_t seed = 0;
  TrainingResult result;
};
MultimodalDataset make_benchmark(DatasetSpec spec, double noise_rate, std::uint64_t seed);
SeededRun run_seeded(const DatasetSpec& spec, double noise_rate, std::uint64_t seed,
                     TrainConfig config, const EpochObserver& observer = {});

struct AblationSetting {
  std::string mjc;  // "intra+inter" | "intra-only" | "inter-only"
  std::string maa;  // "full" | "no-center" | "center-only" | "group-only" | "instance-only"

  TrainConfig apply(TrainConfig base) const;
};

std::vector<std::string> mjc_axis();
std::vector<std::string> maa_axis();
/// Cartesian product of the given axes.
std::vector<AblationSetting> ablation_grid(std::span<const std::string> mjc,
                                           std::span<const std::string> maa);

struct AblationRow {
  double noise_rate = 0.0;
  AblationSetting setting;
  double test_map_1to2 = 0.0;  // seed means
  double test_map_2to1 = 0.0;
  std::optional<double> correction_accuracy;
  std::vector<SeededRun> runs;
};

/// One row per (noise rate x setting), each averaged over seeds. Cells run
/// concurrently; row order is fixed.
std::vector<AblationRow> run_ablation_suite(const DatasetSpec& spec,
                                            std::span<const double> noise_rates,
                                            std::span<const AblationSetting> grid,
                                            std::span<const std::uint64_t> seeds,
                                            const TrainConfig& base);

}  // namespace mca
