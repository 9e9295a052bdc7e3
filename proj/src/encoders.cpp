// SPDX-License-Identifier: Apache-2.0

#include "mca/encoders.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "mca/errors.hpp"

namespace mca {

namespace {

constexpr char kCheckpointMagic[8] = {'M', 'C', 'A', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

Matrix he_normal(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Matrix m(fan_in, fan_out);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

void check_finite(const Matrix& m, std::size_t modality, int layer) {
  if (!m.all_finite()) {
    throw NumericError("embed: non-finite activation in modality " + std::to_string(modality) +
                       " layer " + std::to_string(layer));
  }
}

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof value);
  if (!in) throw ConfigError("checkpoint", "truncated file");
  return value;
}

}  // namespace

std::vector<Matrix*> ModelState::parameters() {
  std::vector<Matrix*> out;
  for (auto& e : encoders) {
    out.insert(out.end(), {&e.w1, &e.b1, &e.w2, &e.b2});
  }
  out.insert(out.end(), {&classifier.weight, &classifier.bias, &centers});
  return out;
}

std::vector<const Matrix*> ModelState::parameters() const {
  std::vector<const Matrix*> out;
  for (const auto& e : encoders) {
    out.insert(out.end(), {&e.w1, &e.b1, &e.w2, &e.b2});
  }
  out.insert(out.end(), {&classifier.weight, &classifier.bias, &centers});
  return out;
}

std::vector<std::string> ModelState::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < encoders.size(); ++j) {
    const auto p = "encoder" + std::to_string(j) + ".";
    names.insert(names.end(), {p + "w1", p + "b1", p + "w2", p + "b2"});
  }
  names.insert(names.end(), {"classifier.weight", "classifier.bias", "centers"});
  return names;
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* p : parameters()) n += p->size();
  return n;
}

ModelState init_model(const ModelShape& shape, std::uint64_t seed) {
  if (shape.input_dims.size() < 2 || shape.hidden < 1 || shape.emb_dim < 1 ||
      shape.num_classes < 2) {
    throw ConfigError("model", "needs >= 2 modalities, hidden >= 1, emb_dim >= 1, K >= 2");
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 11u};
  std::mt19937_64 rng(seq);
  const auto hidden = static_cast<std::size_t>(shape.hidden);
  const auto emb = static_cast<std::size_t>(shape.emb_dim);
  const auto k = static_cast<std::size_t>(shape.num_classes);

  ModelState model;
  for (int d : shape.input_dims) {
    EncoderParams e;
    e.w1 = he_normal(static_cast<std::size_t>(d), hidden, rng);
    e.b1 = Matrix(1, hidden);
    e.w2 = he_normal(hidden, emb, rng);
    e.b2 = Matrix(1, emb);
    model.encoders.push_back(std::move(e));
  }
  model.classifier.weight = he_normal(emb, k, rng);
  model.classifier.bias = Matrix(1, k);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix centers(k, emb);
  for (double& v : centers.data()) v = dist(rng);
  model.centers = l2_normalize_rows(centers);
  return model;
}

Tape::Var embed(Tape& tape, const EncoderVars& params, Tape::Var batch) {
  auto h = tape.relu(tape.affine(batch, params.w1, params.b1));
  auto out = tape.affine(h, params.w2, params.b2);
  return tape.l2_normalize_rows(out);
}

Matrix embed(const ModelState& model, std::size_t modality, const Matrix& batch) {
  if (modality >= model.encoders.size()) {
    throw DimensionError("embed: modality " + std::to_string(modality) + " out of range");
  }
  if (!batch.all_finite()) {
    throw NumericError("embed: non-finite input in modality " + std::to_string(modality));
  }
  const auto& e = model.encoders[modality];
  Matrix h = affine_forward(batch, e.w1, e.b1.row(0));
  for (double& v : h.data()) v = v > 0.0 ? v : 0.0;
  check_finite(h, modality, 1);
  Matrix out = affine_forward(h, e.w2, e.b2.row(0));
  check_finite(out, modality, 2);
  return l2_normalize_rows(out);
}

Matrix predict(const ClassifierParams& classifier, const Matrix& embeddings) {
  return softmax_rows(affine_forward(embeddings, classifier.weight, classifier.bias.row(0)));
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("checkpoint", "cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  write_pod(out, kCheckpointVersion);
  const auto params = model.parameters();
  const auto names = model.parameter_names();
  write_pod(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t p = 0; p < params.size(); ++p) {
    write_pod(out, static_cast<std::uint32_t>(names[p].size()));
    out.write(names[p].data(), static_cast<std::streamsize>(names[p].size()));
    write_pod(out, static_cast<std::uint64_t>(params[p]->rows()));
    write_pod(out, static_cast<std::uint64_t>(params[p]->cols()));
  }
  for (const Matrix* m : params) {
    out.write(reinterpret_cast<const char*>(m->data().data()),
              static_cast<std::streamsize>(m->size() * sizeof(double)));
  }
}

void load_checkpoint(const std::filesystem::path& path, ModelState& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint", "cannot open " + path.string());
  char magic[sizeof kCheckpointMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw ConfigError("checkpoint", "bad magic");
  }
  if (read_pod<std::uint32_t>(in) != kCheckpointVersion) {
    throw ConfigError("checkpoint", "unsupported version");
  }
  auto params = model.parameters();
  const auto names = model.parameter_names();
  if (read_pod<std::uint32_t>(in) != params.size()) {
    throw ConfigError("checkpoint", "parameter count mismatch");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    std::string name(read_pod<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto rows = read_pod<std::uint64_t>(in);
    const auto cols = read_pod<std::uint64_t>(in);
    if (name != names[p] || rows != params[p]->rows() || cols != params[p]->cols()) {
      throw ConfigError("checkpoint", "manifest entry " + name + " does not match " + names[p] +
                                          " " + params[p]->shape_str());
    }
  }
  for (Matrix* m : params) {
    in.read(reinterpret_cast<char*>(m->data().data()),
            static_cast<std::streamsize>(m->size() * sizeof(double)));
    if (!in) throw ConfigError("checkpoint", "truncated tensor data");
  }
}

}  // namespace mca
