// SPDX-License-Identifier: Apache-2.0

#include "mca/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "mca/errors.hpp"

namespace mca {

namespace {

/// Counts every given-label read made on the training path.
class AuditedLabels {
 public:
  explicit AuditedLabels(std::span<const int> labels) : labels_(labels) {}

  std::vector<int> gather(std::span<const std::size_t> rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(labels_[r]);
    reads_ += rows.size();
    return out;
  }

  std::vector<int> all() {
    reads_ += labels_.size();
    return {labels_.begin(), labels_.end()};
  }

  std::uint64_t reads() const noexcept { return reads_; }

 private:
  std::span<const int> labels_;
  std::uint64_t reads_ = 0;
};

void accumulate(LossBreakdown& sum, const LossBreakdown& b) {
  sum.center += b.center;
  sum.group += b.group;
  sum.instance += b.instance;
  sum.classifier += b.classifier;
  sum.total += b.total;
  sum.center_rows += b.center_rows;
  sum.group_rows += b.group_rows;
  sum.group_skipped += b.group_skipped;
  sum.instance_rows += b.instance_rows;
  sum.classifier_rows += b.classifier_rows;
}

void scale(LossBreakdown& b, double factor) {
  b.center *= factor;
  b.group *= factor;
  b.instance *= factor;
  b.classifier *= factor;
  b.total *= factor;
}

std::vector<Matrix> predict_split(const ModelState& model, const std::vector<Matrix>& embeddings) {
  std::vector<Matrix> out;
  for (const auto& e : embeddings) out.push_back(predict(model.classifier, e));
  return out;
}

template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(count, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

void TrainConfig::validate(std::size_t n_train) const {
  if (epochs < 1) throw ConfigError("epochs", "must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (static_cast<std::size_t>(batch_size) > n_train) {
    throw ConfigError("batch_size", "must be <= n_train (" + std::to_string(n_train) + ")");
  }
  if (!(lr > 0.0)) throw ConfigError("lr", "must be > 0");
  if (!(lr_decay > 0.0)) throw ConfigError("lr_decay", "must be > 0");
  if (lr_decay_every < 1) throw ConfigError("lr_decay_every", "must be >= 1");
  if (warmup_epochs < 1) throw ConfigError("warmup_epochs", "must be >= 1");
  if (history < 1) throw ConfigError("history", "must be >= 1");
  if (group_size < 1) throw ConfigError("group_size", "must be >= 1");
  if (!(tau_c > 0.0)) throw ConfigError("tau_c", "must be > 0");
  if (!(tau_m > 0.0)) throw ConfigError("tau_m", "must be > 0");
  if (!(lambda >= 0.0)) throw ConfigError("lambda", "must be >= 0");
  if (emb_dim < 1) throw ConfigError("emb_dim", "must be >= 1");
  if (hidden < 1) throw ConfigError("hidden", "must be >= 1");
  if (use_intra_only && use_inter_only) {
    throw ConfigError("use_inter_only", "cannot be combined with use_intra_only");
  }
}

ConsistencyMode TrainConfig::consistency_mode() const {
  if (use_intra_only) return ConsistencyMode::IntraOnly;
  if (use_inter_only) return ConsistencyMode::InterOnly;
  return ConsistencyMode::IntraInter;
}

AlignmentConfig TrainConfig::alignment() const {
  AlignmentConfig a;
  a.tau_c = tau_c;
  a.tau_m = tau_m;
  a.lambda = lambda;
  a.enable_center = enable_center;
  a.enable_group = enable_group;
  a.enable_instance = enable_instance;
  a.enable_classifier = enable_classifier;
  return a;
}

double TrainConfig::lr_at(int epoch) const {
  return lr * std::pow(lr_decay, static_cast<double>((epoch - 1) / lr_decay_every));
}

TrainConfig TrainConfig::ce_only(TrainConfig base) {
  base.enable_center = false;
  base.enable_group = false;
  base.enable_instance = false;
  base.enable_classifier = true;
  base.enable_correction = false;
  base.use_intra_only = false;
  base.use_inter_only = false;
  return base;
}

std::vector<Matrix> embed_split(const ModelState& model, const Split& split) {
  std::vector<Matrix> out;
  for (std::size_t j = 0; j < split.features.size(); ++j) {
    out.push_back(embed(model, j, split.features[j]));
  }
  return out;
}

TrainingResult run_training(const MultimodalDataset& dataset, const TrainConfig& config,
                            const EpochObserver& observer) {
  const Split& train = dataset.train;
  const std::size_t n = train.size();
  const std::size_t m = train.features.size();
  const auto k = static_cast<std::size_t>(dataset.spec.num_classes);
  config.validate(n);

  ModelShape shape;
  for (const auto& f : train.features) shape.input_dims.push_back(static_cast<int>(f.cols()));
  shape.hidden = config.hidden;
  shape.emb_dim = config.emb_dim;
  shape.num_classes = static_cast<int>(k);

  TrainingResult result;
  ModelState& model = result.model;
  model = init_model(shape, config.seed);
  AdamHyper hyper;
  hyper.lr = config.lr;
  for (const Matrix* p : model.parameters()) model.optimizer.emplace_back(p->size(), hyper);

  HistoryBank bank(n, m, static_cast<std::size_t>(config.history));
  GroupMemory memory(k, m, static_cast<std::size_t>(config.group_size),
                     static_cast<std::size_t>(config.emb_dim));
  AuditedLabels given(train.given_labels);
  const AlignmentConfig alignment = config.alignment();
  const ConsistencyMode mode = config.consistency_mode();

  std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                    static_cast<std::uint32_t>(config.seed >> 32), 23u};
  std::mt19937_64 shuffle_rng(seq);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  std::optional<Partition> partition;  // computed at the end of the previous epoch

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const bool warm = epoch <= config.warmup_epochs || !config.enable_correction;
    const bool divided = !warm && partition.has_value();
    const std::uint64_t reads_before = given.reads();

    EpochReport report;
    report.epoch = epoch;
    report.warmup = epoch <= config.warmup_epochs;
    report.lr = config.lr_at(epoch);
    for (auto& st : model.optimizer) st.lr = report.lr;
    const std::uint64_t steps_before = model.optimizer.front().step_count;

    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t stop = std::min(n, start + batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      std::vector<Matrix> features;
      for (const auto& f : train.features) features.push_back(gather_rows(f, rows));

      BatchRouting routing;
      if (!config.needs_labels()) {
        routing = BatchRouting::unlabeled(rows.size(), m);
      } else if (divided) {
        routing = BatchRouting::from_verdicts(rows, *partition);
      } else {
        routing = BatchRouting::all_clean(given.gather(rows), m);
      }

      BatchLoss loss;
      try {
        loss = total_loss(model, features, routing, memory, alignment);
        auto params = model.parameters();
        for (std::size_t p = 0; p < params.size(); ++p) {
          adam_step(model.optimizer[p], params[p]->data(), loss.gradients[p].data());
        }
      } catch (const NumericError& e) {
        throw DivergenceError(epoch, batches, e.what());
      }
      model.centers = l2_normalize_rows(model.centers);
      memory_push(memory, loss.embeddings, routing, epoch);
      accumulate(report.losses, loss.breakdown);
      ++batches;
    }
    scale(report.losses, 1.0 / static_cast<double>(batches));
    report.losses.lambda = config.lambda;
    report.adam_steps = model.optimizer.front().step_count - steps_before;

    if (divided) {
      report.clean = partition->clean;
      report.noisy = partition->noisy;
      report.unresolved = partition->unresolved;
      report.correction_accuracy = correction_accuracy(*partition, train.true_labels);
    } else if (warm && config.needs_labels()) {
      // Undivided epochs route everything as clean with the given labels.
      report.clean = n;
      std::size_t agree = 0;
      for (std::size_t i = 0; i < n; ++i) agree += train.given_labels[i] == train.true_labels[i];
      report.correction_accuracy = static_cast<double>(agree) / static_cast<double>(n);
    }

    // End-of-epoch inference pass feeds the history bank.
    std::vector<Matrix> train_emb, test_emb;
    try {
      train_emb = embed_split(model, train);
      test_emb = embed_split(model, dataset.test);
    } catch (const NumericError& e) {
      throw DivergenceError(epoch, batches, e.what());
    }
    bank.update(epoch, predict_split(model, train_emb));

    const bool next_divided = epoch + 1 > config.warmup_epochs && config.enable_correction &&
                              config.needs_labels();
    const Partition* used = divided ? &*partition : nullptr;
    std::optional<Partition> next;
    if (next_divided && epoch < config.epochs) next = divide(bank, given.all(), mode);

    if (config.eval_train_map) {
      const auto tr = cross_modal_map(train_emb[0], train_emb[1], train.true_labels,
                                      train.true_labels);
      report.train_map_1to2 = tr.map_1to2;
      report.train_map_2to1 = tr.map_2to1;
    }
    result.final_test = cross_modal_map(test_emb[0], test_emb[1], dataset.test.true_labels,
                                        dataset.test.true_labels);
    report.test_map_1to2 = result.final_test.map_1to2;
    report.test_map_2to1 = result.final_test.map_2to1;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    if (epoch > config.warmup_epochs) result.post_warmup_label_reads += given.reads() - reads_before;
    result.reports.push_back(report);
    if (observer) observer(EpochContext{result.reports.back(), bank, used, memory, model});
    if (next) partition = std::move(next);
  }
  return result;
}

MultimodalDataset make_benchmark(DatasetSpec spec, double noise_rate, std::uint64_t seed) {
  spec.seed = seed;
  return inject_symmetric_noise(generate(spec), noise_rate, seed ^ 0x9e3779b97f4a7c15ULL);
}

SeededRun run_seeded(const DatasetSpec& spec, double noise_rate, std::uint64_t seed,
                     TrainConfig config, const EpochObserver& observer) {
  config.seed = seed;
  SeededRun run;
  run.noise_rate = noise_rate;
  run.seed = seed;
  run.result = run_training(make_benchmark(spec, noise_rate, seed), config, observer);
  return run;
}

TrainConfig AblationSetting::apply(TrainConfig base) const {
  base.use_intra_only = mjc == "intra-only";
  base.use_inter_only = mjc == "inter-only";
  if (mjc != "intra+inter" && mjc != "intra-only" && mjc != "inter-only") {
    throw ConfigError("ablation.mjc", "unknown setting '" + mjc + "'");
  }
  if (maa == "full") {
    base.enable_center = base.enable_group = base.enable_instance = true;
  } else if (maa == "no-center") {
    base.enable_center = false;
    base.enable_group = base.enable_instance = true;
  } else if (maa == "center-only") {
    base.enable_center = true;
    base.enable_group = base.enable_instance = false;
  } else if (maa == "group-only") {
    base.enable_group = true;
    base.enable_center = base.enable_instance = false;
  } else if (maa == "instance-only") {
    base.enable_instance = true;
    base.enable_center = base.enable_group = false;
  } else {
    throw ConfigError("ablation.maa", "unknown setting '" + maa + "'");
  }
  return base;
}

std::vector<std::string> mjc_axis() { return {"intra+inter", "intra-only", "inter-only"}; }

std::vector<std::string> maa_axis() {
  return {"full", "no-center", "center-only", "group-only", "instance-only"};
}

std::vector<AblationSetting> ablation_grid(std::span<const std::string> mjc,
                                           std::span<const std::string> maa) {
  std::vector<AblationSetting> grid;
  for (const auto& a : mjc)
    for (const auto& b : maa) grid.push_back({a, b});
  return grid;
}

std::vector<AblationRow> run_ablation_suite(const DatasetSpec& spec,
                                            std::span<const double> noise_rates,
                                            std::span<const AblationSetting> grid,
                                            std::span<const std::uint64_t> seeds,
                                            const TrainConfig& base) {
  if (noise_rates.empty() || grid.empty() || seeds.empty()) {
    throw ConfigError("ablation", "noise rates, grid and seeds must all be non-empty");
  }
  std::vector<AblationRow> rows;
  for (double rate : noise_rates) {
    for (const auto& setting : grid) {
      AblationRow row;
      row.noise_rate = rate;
      row.setting = setting;
      row.runs.resize(seeds.size());
      rows.push_back(std::move(row));
    }
  }
  const std::size_t per_row = seeds.size();
  parallel_for(rows.size() * per_row, [&](std::size_t job) {
    AblationRow& row = rows[job / per_row];
    const std::uint64_t seed = seeds[job % per_row];
    row.runs[job % per_row] = run_seeded(spec, row.noise_rate, seed, row.setting.apply(base));
  });
  for (auto& row : rows) {
    double acc_sum = 0.0;
    std::size_t acc_n = 0;
    for (const auto& run : row.runs) {
      row.test_map_1to2 += run.result.final_test.map_1to2;
      row.test_map_2to1 += run.result.final_test.map_2to1;
      const auto& acc = run.result.reports.back().correction_accuracy;
      if (acc) {
        acc_sum += *acc;
        ++acc_n;
      }
    }
    row.test_map_1to2 /= static_cast<double>(per_row);
    row.test_map_2to1 /= static_cast<double>(per_row);
    if (acc_n > 0) row.correction_accuracy = acc_sum / static_cast<double>(acc_n);
  }
  return rows;
}

}  // namespace mca
