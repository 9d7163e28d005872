#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "partmatch/tensor.hpp"

namespace partmatch {

/// s(i, j) = <q_i, g_j> / (||q_i|| ||g_j||). Zero-norm rows are a
/// NumericError naming the row.
Tensor cosine_similarity_matrix(const Tensor& queries, const Tensor& gallery);

struct RankedResult {
  std::size_t query_index = 0;
  std::vector<std::size_t> ordering;  // gallery indices, most similar first
  std::size_t correct_at = 0;         // 1-based rank of the first identity match
};

/// Sorts each query row by descending similarity; equal similarities keep
/// ascending gallery order. Throws ConfigError if a query has no possible
/// match in the gallery.
std::vector<RankedResult> rank_gallery(const Tensor& sims, std::span<const int> query_ids,
                                       std::span<const int> gallery_ids);

inline constexpr std::size_t kDefaultTopK[] = {1, 5, 10};

/// Fraction of queries with at least one identity match among the k best.
std::map<std::size_t, double> topk_accuracy(const Tensor& sims, std::span<const int> query_ids,
                                            std::span<const int> gallery_ids,
                                            std::span<const std::size_t> ks = kDefaultTopK);

struct EmbeddingRecord {
  std::string modality;  // "image" or "text"
  int identity = 0;
  std::vector<double> vector;
};

/// Tab-separated text: a header line, then one record per line with
/// modality, identity and the vector components at full precision.
void export_embeddings(const std::filesystem::path& path, std::span<const EmbeddingRecord> records);
std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path);

}  // namespace partmatch
