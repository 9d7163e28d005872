#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "partmatch/autograd.hpp"
#include "partmatch/features.hpp"

namespace partmatch {

/// N x N binary matrix; y(i, j) = 1 iff image i and text j share an identity.
struct MatchLabels {
  Tensor y;

  /// Builds labels from per-sample identities of the images and texts.
  static MatchLabels from_identities(std::span<const int> image_ids, std::span<const int> text_ids);
  /// Throws LabelError unless y is square, binary, and every row has a 1.
  void validate() const;
  MatchLabels transposed() const;
  std::size_t size() const { return y.dim(0); }
};

/// Stage weights of the multi-stage objective plus the log guard epsilon.
struct LossWeights {
  double low = 1.0;
  double local = 1.0;
  double global = 1.0;
  double epsilon = 1e-8;

  void validate() const;
  /// Stage masks of the loss-stage ablation, variants 'a' .. 'f':
  /// a local, b global, c low+local, d low+global, e local+global, f all.
  static LossWeights variant(char name);
};

/// p(i, j) = softmax_j <img_i, txt_j / ||txt_j||>. Inputs are [N, C].
Var match_probabilities(const Var& img, const Var& txt);

/// q(i, j) = y(i, j) / sum_k y(i, k).
Tensor true_match_distribution(const MatchLabels& labels);

/// (1/N) sum_ij p_ij ln(p_ij / (q_ij + epsilon)); entries with p_ij = 0
/// contribute nothing (and receive zero gradient).
Var cmpm_one_direction(const Var& p, const Tensor& q, double epsilon);

/// Image-to-text term plus text-to-image term; the second one swaps roles
/// (texts anchor, images normalized) and uses the transposed labels.
Var cmpm_bidirectional(const Var& img, const Var& txt, const MatchLabels& labels, double epsilon);

struct StageLoss {
  Var total;
  /// Value of each evaluated bidirectional term, e.g. {"low", 1.2},
  /// {"local[0]", 0.8}, {"global", 0.9}. Zero-weighted stages are skipped.
  std::vector<std::pair<std::string, double>> terms;
};

/// low * CMPM(low) + local * sum_k CMPM(parts[k]) + global * CMPM(global).
StageLoss multi_stage_loss(const FeatureSet& images, const FeatureSet& texts,
                           const MatchLabels& labels, const LossWeights& weights);

}  // namespace partmatch
