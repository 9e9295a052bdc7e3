// SPDX-License-Identifier: Apache-2.0

#include "mca/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mca/errors.hpp"

namespace mca {

std::optional<double> average_precision(std::span<const std::uint8_t> ranked_relevance) {
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < ranked_relevance.size(); ++k) {
    if (!ranked_relevance[k]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

DirectionalMap retrieval_map(const Matrix& queries, const Matrix& gallery,
                             std::span<const int> query_labels,
                             std::span<const int> gallery_labels) {
  if (gallery.rows() == 0) throw DimensionError("retrieval_map: empty gallery");
  if (queries.cols() != gallery.cols() || query_labels.size() != queries.rows() ||
      gallery_labels.size() != gallery.rows()) {
    throw DimensionError("retrieval_map: queries " + queries.shape_str() + ", gallery " +
                         gallery.shape_str());
  }
  const Matrix sims = matmul_nt(queries, gallery);
  DirectionalMap out;
  out.per_query_ap.resize(queries.rows());
  std::vector<std::size_t> order(gallery.rows());
  std::vector<std::uint8_t> relevance(gallery.rows());
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto row = sims.row(q);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    for (std::size_t k = 0; k < order.size(); ++k)
      relevance[k] = gallery_labels[order[k]] == query_labels[q];
    const auto ap = average_precision(relevance);
    if (ap) {
      out.per_query_ap[q] = *ap;
      sum += *ap;
      ++counted;
    } else {
      out.per_query_ap[q] = std::numeric_limits<double>::quiet_NaN();
      ++out.excluded;
    }
  }
  out.map = counted == 0 ? 0.0 : sum / static_cast<double>(counted);
  return out;
}

RetrievalReport cross_modal_map(const Matrix& first, const Matrix& second,
                                std::span<const int> first_labels,
                                std::span<const int> second_labels) {
  RetrievalReport r;
  auto forward = retrieval_map(first, second, first_labels, second_labels);
  auto backward = retrieval_map(second, first, second_labels, first_labels);
  r.map_1to2 = forward.map;
  r.map_2to1 = backward.map;
  r.ap_1to2 = std::move(forward.per_query_ap);
  r.ap_2to1 = std::move(backward.per_query_ap);
  r.queries = first.rows();
  r.gallery = second.rows();
  return r;
}

}  // namespace mca
