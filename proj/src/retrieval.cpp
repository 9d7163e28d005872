#include "partmatch/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "partmatch/errors.hpp"

namespace partmatch {
namespace {

std::vector<double> row_norms(const Tensor& m, const char* what) {
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sq += m.at(r, c) * m.at(r, c);
    norms[r] = std::sqrt(sq);
    if (!(norms[r] > 0.0)) {
      throw NumericError(std::string(what) + " row " + std::to_string(r) + " has zero norm");
    }
  }
  return norms;
}

constexpr const char* kEmbeddingHeader = "modality\tidentity\tvector";

}  // namespace

Tensor cosine_similarity_matrix(const Tensor& queries, const Tensor& gallery) {
  if (queries.rank() != 2 || gallery.rank() != 2 || queries.dim(1) != gallery.dim(1)) {
    throw ShapeError("cosine_similarity_matrix: expected [Nq,C] and [Ng,C], got " +
                     shape_string(queries.shape()) + " and " + shape_string(gallery.shape()));
  }
  const auto qn = row_norms(queries, "query");
  const auto gn = row_norms(gallery, "gallery");
  const std::size_t nq = queries.dim(0), ng = gallery.dim(0), c = queries.dim(1);
  Tensor sims(Shape{nq, ng});
  for (std::size_t i = 0; i < nq; ++i) {
    for (std::size_t j = 0; j < ng; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < c; ++k) dot += queries.at(i, k) * gallery.at(j, k);
      sims.at(i, j) = std::clamp(dot / (qn[i] * gn[j]), -1.0, 1.0);
    }
  }
  return sims;
}

std::vector<RankedResult> rank_gallery(const Tensor& sims, std::span<const int> query_ids,
                                       std::span<const int> gallery_ids) {
  if (sims.rank() != 2 || sims.dim(0) != query_ids.size() || sims.dim(1) != gallery_ids.size()) {
    throw ShapeError("rank_gallery: similarity matrix does not match the id lists");
  }
  const std::size_t nq = sims.dim(0), ng = sims.dim(1);
  std::vector<RankedResult> results(nq);
  for (std::size_t i = 0; i < nq; ++i) {
    auto& r = results[i];
    r.query_index = i;
    r.ordering.resize(ng);
    std::iota(r.ordering.begin(), r.ordering.end(), std::size_t{0});
    std::stable_sort(r.ordering.begin(), r.ordering.end(),
                     [&](std::size_t a, std::size_t b) { return sims.at(i, a) > sims.at(i, b); });
    for (std::size_t pos = 0; pos < ng; ++pos) {
      if (gallery_ids[r.ordering[pos]] == query_ids[i]) {
        r.correct_at = pos + 1;
        break;
      }
    }
    if (r.correct_at == 0) {
      throw ConfigError("query " + std::to_string(i) + " (identity " + std::to_string(query_ids[i]) +
                        ") has no match in the gallery");
    }
  }
  return results;
}

std::map<std::size_t, double> topk_accuracy(const Tensor& sims, std::span<const int> query_ids,
                                            std::span<const int> gallery_ids,
                                            std::span<const std::size_t> ks) {
  const auto ranked = rank_gallery(sims, query_ids, gallery_ids);
  std::map<std::size_t, double> out;
  for (std::size_t k : ks) {
    if (k == 0) throw ConfigError("top-k requires k >= 1");
    std::size_t hits = 0;
    for (const auto& r : ranked) hits += r.correct_at <= k ? 1 : 0;
    out[k] = static_cast<double>(hits) / static_cast<double>(ranked.size());
  }
  return out;
}

void export_embeddings(const std::filesystem::path& path, std::span<const EmbeddingRecord> records) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << kEmbeddingHeader << '\n';
  char buf[40];
  for (const auto& rec : records) {
    os << rec.modality << '\t' << rec.identity;
    for (double v : rec.vector) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << '\t' << buf;
    }
    os << '\n';
  }
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(is, line) || line != kEmbeddingHeader) {
    throw IoError("'" + path.string() + "' is not an embedding export");
  }
  std::vector<EmbeddingRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    EmbeddingRecord rec;
    std::string identity, value;
    if (!std::getline(fields, rec.modality, '\t') || !std::getline(fields, identity, '\t')) {
      throw IoError("malformed embedding record: " + line);
    }
    rec.identity = std::stoi(identity);
    while (std::getline(fields, value, '\t')) rec.vector.push_back(std::strtod(value.c_str(), nullptr));
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace partmatch
