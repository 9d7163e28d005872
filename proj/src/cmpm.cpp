#include "partmatch/cmpm.hpp"

#include <cmath>
#include <functional>

#include "partmatch/errors.hpp"
#include "partmatch/ops.hpp"

namespace partmatch {

MatchLabels MatchLabels::from_identities(std::span<const int> image_ids,
                                         std::span<const int> text_ids) {
  if (image_ids.size() != text_ids.size() || image_ids.empty()) {
    throw LabelError("match labels need equally many images and texts (N >= 1)");
  }
  const std::size_t n = image_ids.size();
  MatchLabels labels{Tensor(Shape{n, n})};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) labels.y.at(i, j) = image_ids[i] == text_ids[j] ? 1.0 : 0.0;
  }
  return labels;
}

void MatchLabels::validate() const {
  if (y.rank() != 2 || y.dim(0) != y.dim(1)) throw LabelError("match labels must be a square matrix");
  const std::size_t n = y.dim(0);
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = y.at(i, j);
      if (v != 0.0 && v != 1.0) throw LabelError("match labels must be 0 or 1");
      any = any || v == 1.0;
    }
    if (!any) throw LabelError("row " + std::to_string(i) + " of the match labels has no positive");
  }
}

MatchLabels MatchLabels::transposed() const {
  const std::size_t n = y.dim(0);
  MatchLabels t{Tensor(Shape{n, n})};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) t.y.at(j, i) = y.at(i, j);
  }
  return t;
}

void LossWeights::validate() const {
  if (low < 0.0 || local < 0.0 || global < 0.0) throw ConfigError("loss weights must be non-negative");
  if (low == 0.0 && local == 0.0 && global == 0.0) throw ConfigError("at least one loss weight must be positive");
  if (!(epsilon > 0.0)) throw ConfigError("loss epsilon must be positive");
}

LossWeights LossWeights::variant(char name) {
  switch (name) {
    case 'a': return {0.0, 1.0, 0.0};
    case 'b': return {0.0, 0.0, 1.0};
    case 'c': return {1.0, 1.0, 0.0};
    case 'd': return {1.0, 0.0, 1.0};
    case 'e': return {0.0, 1.0, 1.0};
    case 'f': return {1.0, 1.0, 1.0};
    default: throw ConfigError(std::string("unknown loss-stage variant '") + name + "' (expected a-f)");
  }
}

Var match_probabilities(const Var& img, const Var& txt) {
  if (img.shape().size() != 2 || img.shape() != txt.shape()) {
    throw ShapeError("match_probabilities: expected two [N,C] matrices, got " +
                     shape_string(img.shape()) + " and " + shape_string(txt.shape()));
  }
  return row_softmax(matmul(img, transpose(l2_normalize(txt))));
}

Tensor true_match_distribution(const MatchLabels& labels) {
  labels.validate();
  Tensor q = labels.y;
  const std::size_t n = q.dim(0);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += q.at(i, j);
    for (std::size_t j = 0; j < n; ++j) q.at(i, j) /= total;
  }
  return q;
}

Var cmpm_one_direction(const Var& p, const Tensor& q, double epsilon) {
  if (p.shape().size() != 2 || p.shape() != q.shape()) {
    throw ShapeError("cmpm_one_direction: p and q must be equally shaped matrices");
  }
  if (!(epsilon > 0.0)) throw ConfigError("cmpm_one_direction: epsilon must be positive");
  const std::size_t n = p.shape()[0];
  const auto& pv = p.value();
  std::vector<double> log_ratio(pv.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (pv[i] < 0.0 || q[i] < 0.0) throw NumericError("cmpm_one_direction: negative probability");
    if (pv[i] == 0.0) continue;
    log_ratio[i] = std::log(pv[i] / (q[i] + epsilon));
    total += pv[i] * log_ratio[i];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return make_node(Tensor::scalar(total * inv_n), {p},
                   [log_ratio = std::move(log_ratio), inv_n](Node& self) {
    Node& parent = *self.parents[0];
    auto& g = parent.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (parent.value[i] > 0.0) g[i] += self.grad[0] * inv_n * (log_ratio[i] + 1.0);
    }
  });
}

Var cmpm_bidirectional(const Var& img, const Var& txt, const MatchLabels& labels, double epsilon) {
  const Tensor q_i2t = true_match_distribution(labels);
  const Tensor q_t2i = true_match_distribution(labels.transposed());
  Var i2t = cmpm_one_direction(match_probabilities(img, txt), q_i2t, epsilon);
  Var t2i = cmpm_one_direction(match_probabilities(txt, img), q_t2i, epsilon);
  return add(i2t, t2i);
}

StageLoss multi_stage_loss(const FeatureSet& images, const FeatureSet& texts,
                           const MatchLabels& labels, const LossWeights& weights) {
  weights.validate();
  if (images.parts.size() != texts.parts.size()) {
    throw ShapeError("multi_stage_loss: image and text feature sets have different K (" +
                     std::to_string(images.parts.size()) + " vs " +
                     std::to_string(texts.parts.size()) + ")");
  }
  StageLoss out;
  Var total;
  auto accumulate = [&](const std::function<Var()>& compute, double weight, std::string name) {
    Var term;
    try {
      term = compute();
    } catch (const NumericError& e) {
      throw NumericError("non-finite loss term '" + name + "': " + e.what());
    }
    out.terms.emplace_back(std::move(name), term.value().item());
    Var weighted = scale(term, weight);
    total = total ? add(total, weighted) : weighted;
  };
  if (weights.low > 0.0) {
    accumulate([&] { return cmpm_bidirectional(images.low, texts.low, labels, weights.epsilon); }, weights.low, "low");
  }
  if (weights.local > 0.0) {
    for (std::size_t k = 0; k < images.parts.size(); ++k) {
      accumulate([&] { return cmpm_bidirectional(images.parts[k], texts.parts[k], labels, weights.epsilon); },
                 weights.local, "local[" + std::to_string(k) + "]");
    }
  }
  if (weights.global > 0.0) {
    accumulate([&] { return cmpm_bidirectional(images.global, texts.global, labels, weights.epsilon); },
               weights.global, "global");
  }
  out.total = total;
  return out;
}

}  // namespace partmatch
