// SPDX-License-Identifier: Apache-2.0

#include "mca/config.hpp"

#include <fstream>
#include <map>
#include <set>

#include "mca/errors.hpp"

namespace mca {

using nlohmann::json;

namespace {

/// Reads known keys out of one object level and rejects the rest.
class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(display(), "expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = node_.find(key);
    if (it == node_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(child(key), std::string("wrong type: ") + e.what());
    }
  }

  const json* object(const char* key) {
    seen_.insert(key);
    const auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  std::string child(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) throw ConfigError(child(key), "unknown key");
    }
  }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

json dataset_json(const DatasetSpec& s) {
  return json{{"num_classes", s.num_classes},
              {"n_train", s.n_train},
              {"n_test", s.n_test},
              {"num_modalities", s.num_modalities},
              {"latent_dim", s.latent_dim},
              {"ambient_dims", s.ambient_dims},
              {"class_separation", s.class_separation},
              {"within_class_sigma", s.within_class_sigma},
              {"modality_noise_sigma", s.modality_noise_sigma},
              {"seed", s.seed}};
}

json train_json(const TrainConfig& t) {
  return json{{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"lr", t.lr},
              {"lr_decay", t.lr_decay},
              {"lr_decay_every", t.lr_decay_every},
              {"warmup_epochs", t.warmup_epochs},
              {"history", t.history},
              {"group_size", t.group_size},
              {"tau_c", t.tau_c},
              {"tau_m", t.tau_m},
              {"lambda", t.lambda},
              {"emb_dim", t.emb_dim},
              {"hidden", t.hidden},
              {"seed", t.seed},
              {"use_intra_only", t.use_intra_only},
              {"use_inter_only", t.use_inter_only},
              {"enable_center", t.enable_center},
              {"enable_group", t.enable_group},
              {"enable_instance", t.enable_instance},
              {"enable_classifier", t.enable_classifier},
              {"enable_correction", t.enable_correction},
              {"eval_train_map", t.eval_train_map}};
}

void read_dataset_spec(const json& node, DatasetSpec& s) {
  Reader r(node, "dataset");
  r.get("num_classes", s.num_classes);
  r.get("n_train", s.n_train);
  r.get("n_test", s.n_test);
  r.get("num_modalities", s.num_modalities);
  r.get("latent_dim", s.latent_dim);
  r.get("ambient_dims", s.ambient_dims);
  r.get("class_separation", s.class_separation);
  r.get("within_class_sigma", s.within_class_sigma);
  r.get("modality_noise_sigma", s.modality_noise_sigma);
  r.get("seed", s.seed);
  r.finish();
}

void read_train(const json& node, TrainConfig& t) {
  Reader r(node, "train");
  r.get("epochs", t.epochs);
  r.get("batch_size", t.batch_size);
  r.get("lr", t.lr);
  r.get("lr_decay", t.lr_decay);
  r.get("lr_decay_every", t.lr_decay_every);
  r.get("warmup_epochs", t.warmup_epochs);
  r.get("history", t.history);
  r.get("group_size", t.group_size);
  r.get("tau_c", t.tau_c);
  r.get("tau_m", t.tau_m);
  r.get("lambda", t.lambda);
  r.get("emb_dim", t.emb_dim);
  r.get("hidden", t.hidden);
  r.get("seed", t.seed);
  r.get("use_intra_only", t.use_intra_only);
  r.get("use_inter_only", t.use_inter_only);
  r.get("enable_center", t.enable_center);
  r.get("enable_group", t.enable_group);
  r.get("enable_instance", t.enable_instance);
  r.get("enable_classifier", t.enable_classifier);
  r.get("enable_correction", t.enable_correction);
  r.get("eval_train_map", t.eval_train_map);
  r.finish();
}

template <typename Fn>
void with_prefix(const std::string& prefix, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    const auto colon = msg.find(": ");
    throw ConfigError(prefix + "." + e.field(),
                      colon == std::string::npos ? msg : msg.substr(colon + 2));
  }
}

}  // namespace

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::Single:
      return "single";
    case RunMode::Sweep:
      return "sweep";
    case RunMode::Ablation:
      return "ablation";
    case RunMode::Gradcheck:
      return "gradcheck";
    case RunMode::Compare:
      return "compare";
  }
  return "single";
}

RunMode parse_mode(const std::string& text) {
  static const std::map<std::string, RunMode> modes = {
      {"single", RunMode::Single},       {"run", RunMode::Single},
      {"sweep", RunMode::Sweep},         {"ablation", RunMode::Ablation},
      {"ablate", RunMode::Ablation},     {"gradcheck", RunMode::Gradcheck},
      {"compare", RunMode::Compare}};
  const auto it = modes.find(text);
  if (it == modes.end()) throw ConfigError("mode", "unknown mode '" + text + "'");
  return it->second;
}

void ExperimentConfig::validate() const {
  with_prefix("dataset", [&] { dataset.validate(); });
  with_prefix("train", [&] { train.validate(static_cast<std::size_t>(dataset.n_train)); });
  if (noise_rates.empty()) throw ConfigError("noise_rates", "needs at least one rate");
  for (double r : noise_rates)
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("noise_rates", "rates must lie in [0, 1]");
  if (seeds.empty()) throw ConfigError("seeds", "needs at least one seed");
  if (baseline != "ce_only" && baseline != "mca") {
    throw ConfigError("baseline", "must be 'ce_only' or 'mca'");
  }
  if (output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
  for (const auto& s : ablation_mjc) AblationSetting{s, "full"}.apply(train);
  for (const auto& s : ablation_maa) AblationSetting{"intra+inter", s}.apply(train);
  if (ablation_mjc.empty() || ablation_maa.empty()) {
    throw ConfigError("ablation", "both axes need at least one setting");
  }
}

json to_json(const ExperimentConfig& c) {
  return json{{"mode", to_string(c.mode)},
              {"output_dir", c.output_dir},
              {"noise_rates", c.noise_rates},
              {"seeds", c.seeds},
              {"baseline", c.baseline},
              {"ablation", json{{"mjc", c.ablation_mjc}, {"maa", c.ablation_maa}}},
              {"dataset", dataset_json(c.dataset)},
              {"train", train_json(c.train)}};
}

ExperimentConfig from_json(const json& tree) {
  ExperimentConfig c;
  Reader r(tree, "");
  std::string mode = to_string(c.mode);
  r.get("mode", mode);
  c.mode = parse_mode(mode);
  r.get("output_dir", c.output_dir);
  r.get("noise_rates", c.noise_rates);
  r.get("seeds", c.seeds);
  r.get("baseline", c.baseline);
  if (const json* node = r.object("ablation")) {
    Reader a(*node, "ablation");
    a.get("mjc", c.ablation_mjc);
    a.get("maa", c.ablation_maa);
    a.finish();
  }
  if (const json* node = r.object("dataset")) read_dataset_spec(*node, c.dataset);
  if (const json* node = r.object("train")) read_train(*node, c.train);
  r.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  json tree;
  try {
    tree = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("parse error: ") + e.what());
  }
  return from_json(tree);
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override", "expected key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos
                                                                        : dot - start);
    if (part.empty()) throw ConfigError(key, "empty path component");
    if (!node->is_object()) throw ConfigError(key, "path does not name an object member");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

}  // namespace mca
