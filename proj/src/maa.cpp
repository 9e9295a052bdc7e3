// SPDX-License-Identifier: Apache-2.0

#include "mca/maa.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mca/errors.hpp"

namespace mca {

GroupMemory::GroupMemory(std::size_t classes, std::size_t modalities, std::size_t group_size,
                         std::size_t emb_dim)
    : classes_(classes), modalities_(modalities), group_size_(group_size), emb_dim_(emb_dim),
      groups_(classes * modalities) {
  if (group_size == 0) throw ConfigError("D", "group size must be >= 1");
}

std::size_t GroupMemory::index(std::size_t label, std::size_t modality) const {
  if (label >= classes_ || modality >= modalities_) {
    throw std::out_of_range("group memory: (class " + std::to_string(label) + ", modality " +
                            std::to_string(modality) + ") out of range");
  }
  return label * modalities_ + modality;
}

void GroupMemory::push(std::size_t label, std::size_t modality, std::span<const double> feature,
                       int epoch) {
  if (feature.size() != emb_dim_) {
    throw DimensionError("group memory: feature of length " + std::to_string(feature.size()) +
                         ", expected " + std::to_string(emb_dim_));
  }
  auto& q = groups_[index(label, modality)];
  q.push_back(Entry{std::vector<double>(feature.begin(), feature.end()), epoch});
  if (q.size() > group_size_) q.pop_front();
}

std::size_t GroupMemory::size(std::size_t label, std::size_t modality) const {
  return groups_[index(label, modality)].size();
}

std::size_t GroupMemory::total() const {
  std::size_t n = 0;
  for (const auto& q : groups_) n += q.size();
  return n;
}

std::vector<std::vector<double>> GroupMemory::entries(std::size_t label,
                                                      std::size_t modality) const {
  std::vector<std::vector<double>> out;
  for (const auto& e : groups_[index(label, modality)]) out.push_back(e.feature);
  return out;
}

GroupMemory::Snapshot GroupMemory::snapshot() const {
  Snapshot snap;
  snap.features = Matrix(total(), emb_dim_);
  std::size_t r = 0;
  for (std::size_t k = 0; k < classes_; ++k) {
    for (std::size_t j = 0; j < modalities_; ++j) {
      for (const auto& e : groups_[k * modalities_ + j]) {
        std::copy(e.feature.begin(), e.feature.end(), snap.features.row(r).begin());
        snap.labels.push_back(static_cast<int>(k));
        ++r;
      }
    }
  }
  return snap;
}

BatchRouting BatchRouting::all_clean(std::span<const int> given_labels, std::size_t modalities) {
  BatchRouting r;
  const std::vector<int> labels(given_labels.begin(), given_labels.end());
  r.center.assign(modalities, labels);
  r.group.assign(modalities, labels);
  r.classifier.assign(modalities, labels);
  return r;
}

BatchRouting BatchRouting::from_verdicts(std::span<const std::size_t> rows,
                                         const Partition& partition) {
  const std::size_t m = partition.per_modality.size();
  BatchRouting r = unlabeled(rows.size(), m);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t b = 0; b < rows.size(); ++b) {
      const CorrectionVerdict& v = partition.per_modality[j].at(rows[b]);
      switch (v.status) {
        case CorrectionStatus::Clean:
          r.center[j][b] = r.group[j][b] = r.classifier[j][b] = v.given_label;
          break;
        case CorrectionStatus::NoisyCorrected:
          r.group[j][b] = *v.joint;
          break;
        case CorrectionStatus::NoisyUnresolved:
          break;
      }
    }
  }
  return r;
}

BatchRouting BatchRouting::unlabeled(std::size_t batch, std::size_t modalities) {
  BatchRouting r;
  r.center.assign(modalities, std::vector<int>(batch, -1));
  r.group = r.center;
  r.classifier = r.center;
  return r;
}

namespace {

std::vector<double> weights_for(std::span<const int> labels, std::size_t& applicable) {
  applicable = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(),
                                                      [](int y) { return y >= 0; }));
  std::vector<double> w(labels.size(), 0.0);
  if (applicable == 0) return w;
  for (std::size_t r = 0; r < labels.size(); ++r)
    if (labels[r] >= 0) w[r] = 1.0 / static_cast<double>(applicable);
  return w;
}

std::vector<int> flatten(const std::vector<std::vector<int>>& per_modality) {
  std::vector<int> out;
  for (const auto& v : per_modality) out.insert(out.end(), v.begin(), v.end());
  return out;
}

Tape::Var one_hot_log_loss(Tape& tape, Tape::Var scores, std::span<const int> labels,
                           std::size_t* applicable) {
  const Matrix& s = tape.value(scores);
  if (labels.size() != s.rows()) {
    throw DimensionError("label count " + std::to_string(labels.size()) + " vs scores " +
                         s.shape_str());
  }
  std::size_t n = 0;
  auto weights = weights_for(labels, n);
  std::vector<std::uint8_t> mask(s.size(), 0);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0) continue;
    if (static_cast<std::size_t>(labels[r]) >= s.cols()) {
      throw std::out_of_range("label " + std::to_string(labels[r]) + " out of range");
    }
    mask[r * s.cols() + static_cast<std::size_t>(labels[r])] = 1;
  }
  if (applicable) *applicable = n;
  return tape.softmax_log_loss(scores, std::move(mask), std::move(weights));
}

}  // namespace

Tape::Var center_loss(Tape& tape, Tape::Var embeddings, std::span<const int> labels,
                      Tape::Var centers, double tau, std::size_t* applicable) {
  auto scores = tape.scaled_dot(embeddings, centers, 1.0 / tau);
  return one_hot_log_loss(tape, scores, labels, applicable);
}

Tape::Var classifier_loss(Tape& tape, Tape::Var logits, std::span<const int> labels,
                          std::size_t* applicable) {
  return one_hot_log_loss(tape, logits, labels, applicable);
}

Tape::Var group_loss(Tape& tape, Tape::Var embeddings, std::span<const int> labels,
                     const GroupMemory::Snapshot& memory, double tau, std::size_t* applicable,
                     std::size_t* skipped) {
  const std::size_t rows = tape.value(embeddings).rows();
  if (labels.size() != rows) throw DimensionError("group_loss: label count mismatch");
  std::vector<int> effective(labels.begin(), labels.end());
  std::size_t n_skipped = 0;
  for (int& y : effective) {
    if (y < 0) continue;
    const bool present = std::find(memory.labels.begin(), memory.labels.end(), y) !=
                         memory.labels.end();
    if (!present) {
      y = -1;
      ++n_skipped;
    }
  }
  if (skipped) *skipped = n_skipped;
  std::size_t n = 0;
  auto weights = weights_for(effective, n);
  if (applicable) *applicable = n;
  if (n == 0) return tape.leaf(Matrix(1, 1, 0.0), false);

  auto bank = tape.leaf(memory.features, false);
  auto scores = tape.scaled_dot(embeddings, bank, 1.0 / tau);
  const std::size_t cols = memory.labels.size();
  std::vector<std::uint8_t> mask(rows * cols, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (effective[r] < 0) continue;
    for (std::size_t c = 0; c < cols; ++c) mask[r * cols + c] = memory.labels[c] == effective[r];
  }
  return tape.softmax_log_loss(scores, std::move(mask), std::move(weights));
}

Tape::Var instance_loss(Tape& tape, std::span<const Tape::Var> per_modality, double tau) {
  if (per_modality.empty()) return tape.leaf(Matrix(1, 1, 0.0), false);
  const std::size_t batch = tape.value(per_modality.front()).rows();
  if (batch == 0) return tape.leaf(Matrix(1, 1, 0.0), false);
  auto stacked = tape.concat_rows(per_modality);
  auto scores = tape.scaled_dot(stacked, stacked, 1.0 / tau);
  const std::size_t rows = tape.value(stacked).rows();
  std::vector<std::uint8_t> mask(rows * rows, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < rows; ++c) mask[r * rows + c] = (r % batch) == (c % batch);
  std::vector<double> weights(rows, 1.0 / static_cast<double>(rows));
  return tape.softmax_log_loss(scores, std::move(mask), std::move(weights));
}

LossResult center_loss(const Matrix& embeddings, std::span<const int> labels,
                       const Matrix& centers, double tau) {
  Tape tape;
  auto z = tape.leaf(embeddings);
  auto c = tape.leaf(centers);
  LossResult out;
  auto loss = center_loss(tape, z, labels, c, tau, &out.applicable);
  tape.backward(loss);
  out.value = tape.scalar(loss);
  out.grad_embeddings.push_back(tape.grad(z));
  out.grad_centers = tape.grad(c);
  return out;
}

LossResult group_loss(const Matrix& embeddings, std::span<const int> labels,
                      const GroupMemory& memory, double tau) {
  Tape tape;
  auto z = tape.leaf(embeddings);
  LossResult out;
  auto loss = group_loss(tape, z, labels, memory.snapshot(), tau, &out.applicable, &out.skipped);
  tape.backward(loss);
  out.value = tape.scalar(loss);
  out.grad_embeddings.push_back(tape.grad(z));
  return out;
}

LossResult instance_loss(std::span<const Matrix> per_modality, double tau) {
  Tape tape;
  std::vector<Tape::Var> vars;
  for (const auto& m : per_modality) vars.push_back(tape.leaf(m));
  LossResult out;
  auto loss = instance_loss(tape, vars, tau);
  tape.backward(loss);
  out.value = tape.scalar(loss);
  out.applicable = per_modality.empty() ? 0 : per_modality.size() * per_modality.front().rows();
  for (auto v : vars) out.grad_embeddings.push_back(tape.grad(v));
  return out;
}

LossResult classifier_loss(const Matrix& probabilities, std::span<const int> labels) {
  if (labels.size() != probabilities.rows()) {
    throw DimensionError("classifier_loss: label count mismatch");
  }
  LossResult out;
  double total = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0) continue;
    double p = probabilities(r, static_cast<std::size_t>(labels[r]));
    if (p < 1e-12) {
      p = 1e-12;
      ++out.skipped;
    }
    total -= std::log(p);
    ++out.applicable;
  }
  out.value = out.applicable == 0 ? 0.0 : total / static_cast<double>(out.applicable);
  return out;
}

void memory_push(GroupMemory& memory, std::span<const Matrix> embeddings,
                 const BatchRouting& routing, int epoch) {
  for (std::size_t j = 0; j < embeddings.size(); ++j) {
    for (std::size_t b = 0; b < embeddings[j].rows(); ++b) {
      const int label = routing.group[j][b];
      if (label >= 0) memory.push(static_cast<std::size_t>(label), j, embeddings[j].row(b), epoch);
    }
  }
}

BatchLoss total_loss(const ModelState& model, std::span<const Matrix> batch_features,
                     const BatchRouting& routing, const GroupMemory& memory,
                     const AlignmentConfig& config) {
  const std::size_t m = model.num_modalities();
  if (batch_features.size() != m) {
    throw DimensionError("total_loss: got " + std::to_string(batch_features.size()) +
                         " modalities, model has " + std::to_string(m));
  }
  Tape tape;
  std::vector<Tape::Var> params;
  for (const Matrix* p : model.parameters()) params.push_back(tape.leaf(*p));

  std::vector<Tape::Var> views;
  for (std::size_t j = 0; j < m; ++j) {
    const EncoderVars ev{params[4 * j], params[4 * j + 1], params[4 * j + 2], params[4 * j + 3]};
    views.push_back(embed(tape, ev, tape.leaf(batch_features[j], false)));
  }
  const auto classifier_w = params[4 * m];
  const auto classifier_b = params[4 * m + 1];
  const auto centers = params[4 * m + 2];
  auto stacked = tape.concat_rows(views);

  LossBreakdown bd;
  bd.lambda = config.lambda;
  std::vector<Tape::Var> terms;
  std::vector<double> weights;

  if (config.enable_center) {
    const auto labels = flatten(routing.center);
    auto lc = center_loss(tape, stacked, labels, centers, config.tau_c, &bd.center_rows);
    bd.center = tape.scalar(lc);
    if (bd.center_rows > 0) {
      terms.push_back(lc);
      weights.push_back(1.0);
    }
  }
  if (config.enable_group) {
    const auto labels = flatten(routing.group);
    auto lg = group_loss(tape, stacked, labels, memory.snapshot(), config.tau_m, &bd.group_rows,
                         &bd.group_skipped);
    bd.group = tape.scalar(lg);
    if (bd.group_rows > 0) {
      terms.push_back(lg);
      weights.push_back(1.0);
    }
  }
  if (config.enable_instance) {
    auto li = instance_loss(tape, views, config.tau_m);
    bd.instance = tape.scalar(li);
    bd.instance_rows = tape.value(stacked).rows();
    terms.push_back(li);
    weights.push_back(1.0);
  }
  if (config.enable_classifier) {
    const auto labels = flatten(routing.classifier);
    auto logits = tape.affine(stacked, classifier_w, classifier_b);
    auto lcls = classifier_loss(tape, logits, labels, &bd.classifier_rows);
    bd.classifier = tape.scalar(lcls);
    if (bd.classifier_rows > 0) {
      terms.push_back(lcls);
      weights.push_back(config.lambda);
    }
  }

  auto total = tape.weighted_sum(terms, weights);
  bd.total = tape.scalar(total);
  if (!std::isfinite(bd.total)) throw NumericError("total_loss: non-finite loss");
  tape.backward(total);

  BatchLoss out;
  out.breakdown = bd;
  for (auto p : params) out.gradients.push_back(tape.grad(p));
  for (auto v : views) out.embeddings.push_back(tape.value(v));
  return out;
}

}  // namespace mca
