// SPDX-License-Identifier: Apache-2.0

#include "mca/mjc.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "mca/errors.hpp"

namespace mca {

HistoryBank::HistoryBank(std::size_t samples, std::size_t modalities, std::size_t capacity)
    : samples_(samples), modalities_(modalities), capacity_(capacity),
      slots_(samples * modalities) {
  if (capacity == 0) throw ConfigError("h", "history capacity must be >= 1");
}

std::size_t HistoryBank::index(std::size_t sample, std::size_t modality) const {
  if (sample >= samples_ || modality >= modalities_) {
    throw std::out_of_range("history bank: (sample " + std::to_string(sample) + ", modality " +
                            std::to_string(modality) + ") out of range");
  }
  return sample * modalities_ + modality;
}

void HistoryBank::update(int epoch, std::span<const Matrix> predictions) {
  if (predictions.size() != modalities_) {
    throw std::out_of_range("history bank: got predictions for " +
                            std::to_string(predictions.size()) + " modalities, expected " +
                            std::to_string(modalities_));
  }
  for (std::size_t j = 0; j < modalities_; ++j) {
    if (predictions[j].rows() != samples_) {
      throw std::out_of_range("history bank: modality " + std::to_string(j) + " has " +
                              std::to_string(predictions[j].rows()) + " rows, expected " +
                              std::to_string(samples_));
    }
    for (std::size_t i = 0; i < samples_; ++i) push(i, j, argmax_label(predictions[j].row(i)), epoch);
  }
}

void HistoryBank::push(std::size_t sample, std::size_t modality, int label, int epoch) {
  Slot& slot = slots_[index(sample, modality)];
  slot.labels.push_back(label);
  if (slot.labels.size() > capacity_) slot.labels.pop_front();
  slot.last_epoch = epoch;
}

const std::deque<int>& HistoryBank::queue(std::size_t sample, std::size_t modality) const {
  return slots_[index(sample, modality)].labels;
}

std::size_t HistoryBank::length(std::size_t sample, std::size_t modality) const {
  return queue(sample, modality).size();
}

int HistoryBank::last_epoch(std::size_t sample, std::size_t modality) const {
  return slots_[index(sample, modality)].last_epoch;
}

std::size_t HistoryBank::max_length() const {
  std::size_t n = 0;
  for (const auto& s : slots_) n = std::max(n, s.labels.size());
  return n;
}

int argmax_label(std::span<const double> probabilities) {
  const auto it = std::max_element(probabilities.begin(), probabilities.end());
  return static_cast<int>(it - probabilities.begin());
}

int modal_label(const std::deque<int>& queue) {
  if (queue.empty()) throw NotWarmedUpError("intra consistency: history queue is empty");
  std::map<int, int> counts;
  for (int label : queue) ++counts[label];
  int best_count = 0;
  for (const auto& [label, count] : counts) best_count = std::max(best_count, count);
  // Walk newest to oldest: the first label with the top count is the most recent among ties.
  for (auto it = queue.rbegin(); it != queue.rend(); ++it) {
    if (counts[*it] == best_count) return *it;
  }
  return queue.back();
}

int intra_consistency(const HistoryBank& bank, std::size_t sample, std::size_t modality) {
  return modal_label(bank.queue(sample, modality));
}

std::optional<int> CorrectionVerdict::effective_label() const {
  switch (status) {
    case CorrectionStatus::Clean:
      return given_label;
    case CorrectionStatus::NoisyCorrected:
      return joint;
    case CorrectionStatus::NoisyUnresolved:
      break;
  }
  return std::nullopt;
}

namespace {

CorrectionVerdict decide(std::vector<int> intra_labels, int given) {
  CorrectionVerdict v;
  v.given_label = given;
  const bool agree = std::all_of(intra_labels.begin(), intra_labels.end(),
                                 [&](int c) { return c == intra_labels.front(); });
  if (agree && !intra_labels.empty()) v.joint = intra_labels.front();
  v.intra_labels = std::move(intra_labels);
  if (!v.joint) {
    v.status = CorrectionStatus::NoisyUnresolved;
  } else if (*v.joint == given) {
    v.status = CorrectionStatus::Clean;
  } else {
    v.status = CorrectionStatus::NoisyCorrected;
  }
  return v;
}

int latest_label(const HistoryBank& bank, std::size_t sample, std::size_t modality) {
  const auto& q = bank.queue(sample, modality);
  if (q.empty()) throw NotWarmedUpError("inter consistency: history queue is empty");
  return q.back();
}

void check_given(const HistoryBank& bank, std::span<const int> given_labels) {
  if (given_labels.size() != bank.samples()) {
    throw std::out_of_range("joint correction: " + std::to_string(given_labels.size()) +
                            " labels for " + std::to_string(bank.samples()) + " samples");
  }
}

}  // namespace

std::vector<CorrectionVerdict> joint_correct(const HistoryBank& bank,
                                             std::span<const int> given_labels) {
  check_given(bank, given_labels);
  std::vector<CorrectionVerdict> out;
  out.reserve(bank.samples());
  for (std::size_t i = 0; i < bank.samples(); ++i) {
    std::vector<int> intra(bank.modalities());
    for (std::size_t j = 0; j < bank.modalities(); ++j) intra[j] = intra_consistency(bank, i, j);
    out.push_back(decide(std::move(intra), given_labels[i]));
  }
  return out;
}

std::optional<double> correction_accuracy(std::span<const CorrectionVerdict> verdicts,
                                          std::span<const int> true_labels) {
  if (verdicts.size() != true_labels.size()) {
    throw std::out_of_range("correction accuracy: verdict/label count mismatch");
  }
  std::size_t resolved = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    const auto label = verdicts[i].effective_label();
    if (!label) continue;
    ++resolved;
    correct += *label == true_labels[i] ? 1 : 0;
  }
  if (resolved == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(resolved);
}

Partition divide(const HistoryBank& bank, std::span<const int> given_labels,
                 ConsistencyMode mode) {
  check_given(bank, given_labels);
  const std::size_t n = bank.samples();
  const std::size_t m = bank.modalities();
  Partition p;
  p.per_modality.assign(m, {});
  for (auto& v : p.per_modality) v.reserve(n);

  for (std::size_t i = 0; i < n; ++i) {
    if (mode == ConsistencyMode::IntraOnly) {
      for (std::size_t j = 0; j < m; ++j) {
        p.per_modality[j].push_back(decide({intra_consistency(bank, i, j)}, given_labels[i]));
      }
    } else {
      std::vector<int> labels(m);
      for (std::size_t j = 0; j < m; ++j) {
        labels[j] = mode == ConsistencyMode::IntraInter ? intra_consistency(bank, i, j)
                                                        : latest_label(bank, i, j);
      }
      const CorrectionVerdict v = decide(std::move(labels), given_labels[i]);
      for (std::size_t j = 0; j < m; ++j) p.per_modality[j].push_back(v);
    }

    bool all_clean = true;
    bool any_unresolved = false;
    for (std::size_t j = 0; j < m; ++j) {
      const auto s = p.per_modality[j].back().status;
      all_clean = all_clean && s == CorrectionStatus::Clean;
      any_unresolved = any_unresolved || s == CorrectionStatus::NoisyUnresolved;
    }
    (all_clean ? p.clean : p.noisy) += 1;
    p.unresolved += any_unresolved ? 1 : 0;
  }
  return p;
}

std::optional<double> correction_accuracy(const Partition& partition,
                                          std::span<const int> true_labels) {
  std::vector<CorrectionVerdict> pooled;
  std::vector<int> truth;
  for (const auto& per : partition.per_modality) {
    pooled.insert(pooled.end(), per.begin(), per.end());
    truth.insert(truth.end(), true_labels.begin(), true_labels.end());
  }
  return correction_accuracy(pooled, truth);
}

}  // namespace mca
