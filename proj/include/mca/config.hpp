// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mca/data.hpp"
#include "mca/trainer.hpp"

namespace mca {

enum class RunMode { Single, Sweep, Ablation, Gradcheck, Compare };

std::string to_string(RunMode mode);
RunMode parse_mode(const std::string& text);

struct ExperimentConfig {
  RunMode mode = RunMode::Single;
  std::string output_dir = "mca-out";
  std::vector<double> noise_rates = {0.4};
  std::vector<std::uint64_t> seeds = {1};
  std::string baseline = "ce_only";  // compare mode: "ce_only" | "mca"
  std::vector<std::string> ablation_mjc = mjc_axis();
  std::vector<std::string> ablation_maa = maa_axis();
  DatasetSpec dataset;
  TrainConfig train;

  /// Throws ConfigError with the dotted field path.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Unknown keys and wrong types are ConfigErrors naming the dotted path.
/// Missing keys keep their defaults.
ExperimentConfig from_json(const nlohmann::json& tree);

ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies "dotted.path=value" on top of the tree. The value is parsed as JSON
/// when possible (numbers, booleans, arrays) and taken as a string otherwise.
void apply_override(nlohmann::json& tree, const std::string& assignment);

}  // namespace mca
