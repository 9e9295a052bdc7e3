// SPDX-License-Identifier: Apache-2.0
//
// Independent reference computations shared by the unit and acceptance tests.
// Deliberately written without calling into the library under test.

#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <vector>

namespace oracle {

/// Most frequent label of a push history truncated to its last h entries.
/// Ties: the tied label seen latest wins.
inline int recount_mode(const std::vector<int>& pushes, std::size_t h) {
  const std::size_t start = pushes.size() > h ? pushes.size() - h : 0;
  std::map<int, int> count;
  std::map<int, std::size_t> last_seen;
  for (std::size_t t = start; t < pushes.size(); ++t) {
    ++count[pushes[t]];
    last_seen[pushes[t]] = t;
  }
  int best = -1;
  for (const auto& [label, c] : count) {
    if (best < 0 || c > count[best] || (c == count[best] && last_seen[label] > last_seen[best])) {
      best = label;
    }
  }
  return best;
}

enum class Verdict { Clean, Corrected, Unresolved };

struct Decision {
  Verdict verdict;
  std::optional<int> label;
};

/// Intersects the singleton label sets of every modality.
inline Decision intersect(const std::vector<int>& per_modality, int given) {
  std::set<int> acc{per_modality.front()};
  for (int c : per_modality) {
    std::set<int> next;
    std::set_intersection(acc.begin(), acc.end(), &c, &c + 1, std::inserter(next, next.end()));
    acc = std::move(next);
  }
  if (acc.empty()) return {Verdict::Unresolved, std::nullopt};
  const int h = *acc.begin();
  return {h == given ? Verdict::Clean : Verdict::Corrected, h};
}

/// Average precision by direct enumeration of every cutoff.
inline std::optional<double> brute_ap(const std::vector<double>& scores,
                                      const std::vector<bool>& relevant) {
  const std::size_t n = scores.size();
  // Rank: higher score first, lower gallery index first on ties.
  std::vector<std::size_t> rank_of(n);
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t ahead = 0;
    for (std::size_t b = 0; b < n; ++b) {
      if (scores[b] > scores[a] || (scores[b] == scores[a] && b < a)) ++ahead;
    }
    rank_of[a] = ahead + 1;
  }
  std::size_t total = 0;
  for (bool r : relevant) total += r;
  if (total == 0) return std::nullopt;
  // Precision at each relevant item, accumulated in rank order as the sum
  // over k is written.
  std::vector<double> at_rank(n + 1, -1.0);
  for (std::size_t a = 0; a < n; ++a) {
    if (!relevant[a]) continue;
    std::size_t hits_within = 0;
    for (std::size_t b = 0; b < n; ++b) hits_within += relevant[b] && rank_of[b] <= rank_of[a];
    at_rank[rank_of[a]] = static_cast<double>(hits_within) / static_cast<double>(rank_of[a]);
  }
  double sum = 0.0;
  for (std::size_t k = 1; k <= n; ++k)
    if (at_rank[k] >= 0.0) sum += at_rank[k];
  return sum / static_cast<double>(total);
}

}  // namespace oracle
