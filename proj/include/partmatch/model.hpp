#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "partmatch/textual.hpp"
#include "partmatch/visual.hpp"

namespace partmatch {

/// Architecture of both branches. C1, C2 and K are shared; `visual` and
/// `textual` must agree on them.
struct ModelConfig {
  VisualConfig visual;
  TextualConfig textual;
  Pooling pooling = Pooling::Max;

  void validate() const;
  /// Sets K on both branches.
  void set_regions(std::size_t k);
  /// Tiny dimensions for gradient checking: K 2, P 1, C1 8, C2 16, L 8, D 12.
  static ModelConfig tiny();
};

/// Both branches sharing one parameter store. Not copyable: layers hold
/// handles into the store and addresses of their running statistics.
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;

  /// `images` is [N, input_height, input_width, 3].
  FeatureSet encode_images(const Var& images, Mode mode);
  /// `ids` holds `batch` padded sequences of length L.
  FeatureSet encode_texts(std::span<const int> ids, std::size_t batch, Mode mode);

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  VisualBranch& visual() { return visual_; }
  TextualBranch& textual() { return textual_; }
  const ModelConfig& config() const { return config_; }

  /// Running statistics of every batch-norm layer, in a stable order.
  std::vector<NamedBuffer> buffers();

 private:
  ModelConfig config_;
  ParameterStore params_;
  Rng init_rng_;
  VisualBranch visual_;
  TextualBranch textual_;
};

}  // namespace partmatch
