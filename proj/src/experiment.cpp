// SPDX-License-Identifier: Apache-2.0

#include "mca/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "mca/errors.hpp"
#include "mca/gradient_suite.hpp"

namespace mca {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string exact(double v) { return fmt("%.17g", v); }
std::string fixed(double v) { return fmt("%.6f", v); }
std::string fixed(const std::optional<double>& v) { return v ? fixed(*v) : ""; }

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

json aggregate_json(const Aggregate& a) {
  json per_seed = json::array();
  for (std::size_t s = 0; s < a.seeds.size(); ++s) {
    per_seed.push_back({{"seed", a.seeds[s]},
                        {"test_map_1to2", a.map_1to2[s]},
                        {"test_map_2to1", a.map_2to1[s]},
                        {"correction_accuracy", optional_json(a.correction_accuracy[s])}});
  }
  return {{"variant", a.variant},
          {"noise_rate", a.noise_rate},
          {"test_map_1to2", a.mean_1to2()},
          {"test_map_2to1", a.mean_2to1()},
          {"test_map_mean", a.mean_map()},
          {"correction_accuracy", optional_json(a.mean_correction_accuracy())},
          {"per_seed", per_seed}};
}

/// Shared state for the training modes.
class Session {
 public:
  Session(const ExperimentConfig& config, const LogSink& log)
      : config_(config), log_(log), id_(run_id(config)) {}

  void emit(json record) const {
    if (!log_) return;
    record["run_id"] = id_;
    log_(record);
  }

  /// Runs every seed of one variant at one rate, appending report rows.
  Aggregate run_variant(const std::string& variant, const TrainConfig& train, double rate,
                        std::ostream& report) {
    Aggregate agg;
    agg.variant = variant;
    agg.noise_rate = rate;
    for (std::uint64_t seed : config_.seeds) {
      emit({{"event", "run_start"}, {"variant", variant}, {"noise_rate", rate}, {"seed", seed}});
      const EpochObserver observer = [&](const EpochContext& ctx) {
        emit(epoch_record(variant, rate, seed, ctx.report));
      };
      SeededRun run = run_seeded(config_.dataset, rate, seed, train, observer);
      record(agg, run);
      write_report_rows(report, variant, rate, seed, run.result.reports);
      if (config_.mode == RunMode::Single) save_model(variant, rate, seed, run.result.model);
      emit({{"event", "run_end"},
            {"variant", variant},
            {"noise_rate", rate},
            {"seed", seed},
            {"test_map_1to2", run.result.final_test.map_1to2},
            {"test_map_2to1", run.result.final_test.map_2to1}});
    }
    return agg;
  }

  static void record(Aggregate& agg, const SeededRun& run) {
    agg.seeds.push_back(run.seed);
    agg.map_1to2.push_back(run.result.final_test.map_1to2);
    agg.map_2to1.push_back(run.result.final_test.map_2to1);
    agg.correction_accuracy.push_back(run.result.reports.back().correction_accuracy);
  }

  static json epoch_record(const std::string& variant, double rate, std::uint64_t seed,
                           const EpochReport& r) {
    return {{"event", "epoch"},
            {"variant", variant},
            {"noise_rate", rate},
            {"seed", seed},
            {"epoch", r.epoch},
            {"lr", r.lr},
            {"warmup", r.warmup},
            {"loss_total", r.losses.total},
            {"clean", r.clean},
            {"noisy", r.noisy},
            {"unresolved", r.unresolved},
            {"correction_accuracy", optional_json(r.correction_accuracy)},
            {"test_map_1to2", r.test_map_1to2},
            {"test_map_2to1", r.test_map_2to1}};
  }

  void save_model(const std::string& variant, double rate, std::uint64_t seed,
                  const ModelState& model) const {
    const fs::path dir = fs::path(config_.output_dir) / "checkpoints";
    fs::create_directories(dir);
    char name[128];
    std::snprintf(name, sizeof name, "%s-rho%.2f-seed%llu.ckpt", variant.c_str(), rate,
                  static_cast<unsigned long long>(seed));
    save_checkpoint(dir / name, model);
  }

  const std::string& id() const { return id_; }

 private:
  const ExperimentConfig& config_;
  const LogSink& log_;
  std::string id_;
};

void write_aggregate_table(const fs::path& path, const char* schema,
                           const std::vector<Aggregate>& rows) {
  auto out = open_out(path);
  out << schema << "\n"
      << "variant,noise_rate,seeds,test_map_1to2,test_map_2to1,test_map_mean,correction_accuracy\n";
  for (const auto& a : rows) {
    out << a.variant << ',' << fixed(a.noise_rate) << ',' << a.seeds.size() << ','
        << fixed(a.mean_1to2()) << ',' << fixed(a.mean_2to1()) << ',' << fixed(a.mean_map())
        << ',' << fixed(a.mean_correction_accuracy()) << "\n";
  }
}

}  // namespace

double Aggregate::mean_1to2() const { return mean(map_1to2); }
double Aggregate::mean_2to1() const { return mean(map_2to1); }

std::optional<double> Aggregate::mean_correction_accuracy() const {
  std::vector<double> present;
  for (const auto& v : correction_accuracy)
    if (v) present.push_back(*v);
  if (present.empty()) return std::nullopt;
  return mean(present);
}

std::string run_id(const ExperimentConfig& config) {
  // FNV-1a over the canonical config text.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json(config).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_report_header(std::ostream& out) {
  out << kReportSchema << "\n"
      << "variant,noise_rate,seed,epoch,lr,warmup,loss_center,loss_group,loss_instance,"
         "loss_classifier,loss_total,clean,noisy,unresolved,correction_accuracy,"
         "train_map_1to2,train_map_2to1,test_map_1to2,test_map_2to1,adam_steps\n";
}

void write_report_rows(std::ostream& out, const std::string& variant, double noise_rate,
                       std::uint64_t seed, const std::vector<EpochReport>& reports) {
  for (const auto& r : reports) {
    out << variant << ',' << exact(noise_rate) << ',' << seed << ',' << r.epoch << ','
        << exact(r.lr) << ',' << (r.warmup ? 1 : 0) << ',' << exact(r.losses.center) << ','
        << exact(r.losses.group) << ',' << exact(r.losses.instance) << ','
        << exact(r.losses.classifier) << ',' << exact(r.losses.total) << ',' << r.clean << ','
        << r.noisy << ',' << r.unresolved << ','
        << (r.correction_accuracy ? exact(*r.correction_accuracy) : "") << ','
        << exact(r.train_map_1to2) << ',' << exact(r.train_map_2to1) << ','
        << exact(r.test_map_1to2) << ',' << exact(r.test_map_2to1) << ',' << r.adam_steps
        << "\n";
  }
}

ExperimentResult run_experiment(const ExperimentConfig& config, const LogSink& log) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const fs::path dir(config.output_dir);
  fs::create_directories(dir);
  {
    auto echo = open_out(dir / "config.echo");
    echo << to_json(config).dump(2) << "\n";
  }

  Session session(config, log);
  session.emit({{"event", "start"}, {"mode", to_string(config.mode)}});
  ExperimentResult result;
  json details = json::object();

  if (config.mode == RunMode::Gradcheck) {
    const auto cases = run_gradient_suite(config.train.seed);
    auto out = open_out(dir / "report.csv");
    out << "# mca gradcheck v1\nloss,coordinates,max_relative_error,worst_index,passed\n";
    json items = json::array();
    for (const auto& c : cases) {
      out << c.name << ',' << c.report.coordinates << ',' << fmt("%.6e", c.report.max_relative_error)
          << ',' << c.report.worst_index << ',' << (c.report.passed ? 1 : 0) << "\n";
      items.push_back({{"loss", c.name},
                       {"max_relative_error", c.report.max_relative_error},
                       {"coordinates", c.report.coordinates},
                       {"passed", c.report.passed},
                       {"diagnostic", c.report.diagnostic}});
      session.emit({{"event", "gradcheck"},
                    {"loss", c.name},
                    {"max_relative_error", c.report.max_relative_error},
                    {"passed", c.report.passed}});
      if (!c.report.passed) result.exit_code = 1;
    }
    details["gradcheck"] = items;
  } else if (config.mode == RunMode::Ablation) {
    const auto grid = ablation_grid(config.ablation_mjc, config.ablation_maa);
    const auto rows = run_ablation_suite(config.dataset, config.noise_rates, grid, config.seeds,
                                         config.train);
    auto report = open_out(dir / "report.csv");
    write_report_header(report);
    for (const auto& row : rows) {
      Aggregate agg;
      agg.variant = row.setting.mjc + "/" + row.setting.maa;
      agg.noise_rate = row.noise_rate;
      for (const auto& run : row.runs) {
        Session::record(agg, run);
        write_report_rows(report, agg.variant, run.noise_rate, run.seed, run.result.reports);
        for (const auto& r : run.result.reports) {
          session.emit(Session::epoch_record(agg.variant, run.noise_rate, run.seed, r));
        }
      }
      result.aggregates.push_back(std::move(agg));
    }
    write_aggregate_table(dir / "ablation.csv", "# mca ablation v1", result.aggregates);
  } else {
    auto report = open_out(dir / "report.csv");
    write_report_header(report);
    for (double rate : config.noise_rates) {
      result.aggregates.push_back(session.run_variant("mca", config.train, rate, report));
      if (config.mode == RunMode::Compare) {
        const TrainConfig base = config.baseline == "ce_only" ? TrainConfig::ce_only(config.train)
                                                              : config.train;
        result.aggregates.push_back(session.run_variant(config.baseline, base, rate, report));
      }
    }
    if (config.mode == RunMode::Sweep) {
      write_aggregate_table(dir / "sweep.csv", "# mca sweep v1", result.aggregates);
    }
    if (config.mode == RunMode::Compare) {
      auto out = open_out(dir / "compare.csv");
      out << "# mca compare v1\nnoise_rate,mca_map,baseline,baseline_map,delta\n";
      json items = json::array();
      for (std::size_t i = 0; i + 1 < result.aggregates.size(); i += 2) {
        const auto& ours = result.aggregates[i];
        const auto& theirs = result.aggregates[i + 1];
        const double delta = ours.mean_map() - theirs.mean_map();
        out << fixed(ours.noise_rate) << ',' << fixed(ours.mean_map()) << ',' << theirs.variant
            << ',' << fixed(theirs.mean_map()) << ',' << fixed(delta) << "\n";
        items.push_back({{"noise_rate", ours.noise_rate},
                         {"mca_map", ours.mean_map()},
                         {"baseline", theirs.variant},
                         {"baseline_map", theirs.mean_map()},
                         {"delta", delta}});
      }
      details["compare"] = items;
    }
  }

  json aggregates = json::array();
  for (const auto& a : result.aggregates) aggregates.push_back(aggregate_json(a));
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  result.summary = {{"format", "mca-summary v1"},
                    {"version", kVersion},
                    {"run_id", session.id()},
                    {"mode", to_string(config.mode)},
                    {"exit_code", result.exit_code},
                    {"wall_seconds", wall},
                    {"results", aggregates},
                    {"config", to_json(config)}};
  for (auto& [key, value] : details.items()) result.summary[key] = value;
  auto out = open_out(dir / "summary.json");
  out << result.summary.dump(2) << "\n";
  session.emit({{"event", "done"}, {"exit_code", result.exit_code}, {"wall_seconds", wall}});
  return result;
}

}  // namespace mca
