// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mca/config.hpp"
#include "mca/trainer.hpp"

namespace mca {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kReportSchema = "# mca report v1";

/// One structured log record per call.
using LogSink = std::function<void(const nlohmann::json&)>;

/// Seed-averaged final metrics of one variant at one noise rate.
struct Aggregate {
  std::string variant;
  double noise_rate = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> map_1to2;  // per seed
  std::vector<double> map_2to1;
  std::vector<std::optional<double>> correction_accuracy;

  double mean_1to2() const;
  double mean_2to1() const;
  double mean_map() const { return 0.5 * (mean_1to2() + mean_2to1()); }
  std::optional<double> mean_correction_accuracy() const;
};

struct ExperimentResult {
  int exit_code = 0;  // 1 when a gradient check fails
  std::vector<Aggregate> aggregates;
  nlohmann::json summary;
};

/// Stable identifier derived from the config, so reruns share it.
std::string run_id(const ExperimentConfig& config);

/// Per-epoch CSV. Contains no wall-clock fields so identical runs produce
/// identical bytes.
void write_report_header(std::ostream& out);
void write_report_rows(std::ostream& out, const std::string& variant, double noise_rate,
                       std::uint64_t seed, const std::vector<EpochReport>& reports);

/// Executes config.mode and writes report.csv, summary.json, config.echo and
/// the mode's table under config.output_dir. Training errors propagate.
ExperimentResult run_experiment(const ExperimentConfig& config, const LogSink& log = {});

}  // namespace mca
