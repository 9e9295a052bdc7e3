// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: run, sweep, ablate, gradcheck, compare.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mca/config.hpp"
#include "mca/errors.hpp"
#include "mca/experiment.hpp"

namespace {

using nlohmann::json;

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

struct Options {
  std::string config_path;
  std::string mode;
  std::vector<std::string> sets;
  std::string noise;
  std::string seeds;
  std::string out;
  std::string baseline;
  int epochs = 0;
  bool quiet = false;
};

void error_record(const json& record) { std::cerr << record.dump() << std::endl; }

json parse_list(const std::string& field, const std::string& text, bool integers) {
  json list = json::array();
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      if (integers) {
        list.push_back(std::stoull(item, &used));
      } else {
        list.push_back(std::stod(item, &used));
      }
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw mca::ConfigError(field, "cannot parse '" + item + "'");
    }
  }
  return list;
}

/// File config, then dedicated flags, then --set overrides.
mca::ExperimentConfig build_config(const Options& opt, const std::string& verb) {
  json tree = json::object();
  if (!opt.config_path.empty()) {
    if (!std::filesystem::exists(opt.config_path)) {
      throw mca::ConfigError("config", "file not found: " + opt.config_path);
    }
    tree = json(mca::to_json(mca::load_config(opt.config_path)));
  }
  if (verb != "run") {
    tree["mode"] = verb;
  } else if (!opt.mode.empty()) {
    tree["mode"] = opt.mode;
  }
  if (!opt.noise.empty()) tree["noise_rates"] = parse_list("noise_rates", opt.noise, false);
  if (!opt.seeds.empty()) tree["seeds"] = parse_list("seeds", opt.seeds, true);
  if (!opt.out.empty()) tree["output_dir"] = opt.out;
  if (!opt.baseline.empty()) tree["baseline"] = opt.baseline;
  if (opt.epochs > 0) tree["train"]["epochs"] = opt.epochs;
  for (const auto& s : opt.sets) mca::apply_override(tree, s);
  mca::ExperimentConfig config = mca::from_json(tree);
  config.validate();
  return config;
}

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("-c,--config", opt.config_path, "JSON config file");
  cmd->add_option("--set", opt.sets, "Override a config key: dotted.key=value (repeatable)");
  cmd->add_option("--noise", opt.noise, "Comma-separated noise rates");
  cmd->add_option("--seeds", opt.seeds, "Comma-separated seeds");
  cmd->add_option("-o,--out", opt.out, "Output directory");
  cmd->add_option("--epochs", opt.epochs, "Training epochs");
  cmd->add_flag("-q,--quiet", opt.quiet, "Suppress per-epoch log records");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noisy-label cross-modal retrieval with joint label correction"};
  app.set_version_flag("--version", std::string(mca::kVersion));
  app.require_subcommand(1);
  Options opt;

  auto* run = app.add_subcommand("run", "Run the mode named by --mode or the config");
  run->add_option("--mode", opt.mode, "single | sweep | ablation | gradcheck | compare");
  add_common(run, opt);
  add_common(app.add_subcommand("sweep", "Train MCA at every noise rate"), opt);
  add_common(app.add_subcommand("ablate", "Run the ablation grid"), opt);
  add_common(app.add_subcommand("gradcheck", "Finite-difference gradient suite"), opt);
  auto* compare = app.add_subcommand("compare", "MCA against a baseline");
  compare->add_option("--baseline", opt.baseline, "ce_only | mca");
  add_common(compare, opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  const std::string verb = app.get_subcommands().front()->get_name();
  const std::string verb_mode = verb == "ablate" ? "ablation" : verb;

  mca::ExperimentConfig config;
  try {
    config = build_config(opt, verb == "run" ? "run" : verb_mode);
  } catch (const mca::ConfigError& e) {
    error_record({{"event", "error"}, {"kind", "config"}, {"field", e.field()},
                  {"message", e.what()}});
    return kExitConfig;
  }

  const bool quiet = opt.quiet;
  const mca::LogSink log = [quiet](const json& record) {
    if (quiet && record.value("event", "") == "epoch") return;
    std::cout << record.dump() << std::endl;
  };

  auto write_error = [&](const json& record) {
    error_record(record);
    std::error_code ec;
    if (std::filesystem::is_directory(config.output_dir, ec)) {
      std::ofstream(std::filesystem::path(config.output_dir) / "error.json")
          << record.dump(2) << "\n";
    }
  };

  try {
    const auto result = mca::run_experiment(config, log);
    return result.exit_code;
  } catch (const mca::ConfigError& e) {
    error_record({{"event", "error"}, {"kind", "config"}, {"field", e.field()},
                  {"message", e.what()}});
    return kExitConfig;
  } catch (const mca::DivergenceError& e) {
    write_error({{"event", "error"}, {"kind", "divergence"}, {"epoch", e.epoch()},
                 {"batch", e.batch()}, {"message", e.what()}});
    return kExitDivergence;
  } catch (const std::exception& e) {
    write_error({{"event", "error"}, {"kind", "failure"}, {"message", e.what()}});
    return kExitFailure;
  }
}
