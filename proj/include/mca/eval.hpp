// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mca/numerics/matrix.hpp"

namespace mca {

/// (1/R) * sum over relevant ranks k of precision@k. nullopt when nothing is
/// relevant.
std::optional<double> average_precision(std::span<const std::uint8_t> ranked_relevance);

struct DirectionalMap {
  double map = 0.0;
  std::vector<double> per_query_ap;  // NaN for queries with no relevant item
  std::size_t excluded = 0;
};

/// Ranks the gallery by descending dot product for each query (ties by gallery
/// index) and averages AP over queries with at least one relevant item.
DirectionalMap retrieval_map(const Matrix& queries, const Matrix& gallery,
                             std::span<const int> query_labels,
                             std::span<const int> gallery_labels);

struct RetrievalReport {
  double map_1to2 = 0.0;
  double map_2to1 = 0.0;
  std::vector<double> ap_1to2;
  std::vector<double> ap_2to1;
  std::size_t queries = 0;
  std::size_t gallery = 0;
};

/// Both directions between modality-1 and modality-2 embeddings of the same objects.
RetrievalReport cross_modal_map(const Matrix& first, const Matrix& second,
                                std::span<const int> first_labels,
                                std::span<const int> second_labels);

}  // namespace mca
