#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "partmatch/features.hpp"
#include "partmatch/layers.hpp"

namespace partmatch {

struct VisualConfig {
  std::size_t height = 6;          // H of both feature maps
  std::size_t width = 2;           // W
  std::size_t low_channels = 32;   // C1
  std::size_t high_channels = 64;  // C2
  std::size_t regions = 3;         // K horizontal stripes
  std::size_t input_height = 48;
  std::size_t input_width = 16;

  /// Number of stride-2 stages between the input and the H x W maps.
  std::size_t downsample_stages() const;
  void validate() const;

  /// 384x128 input, 24x8 maps, C1 1024, C2 2048, K 6.
  static VisualConfig reference();
};

struct BackboneOutput {
  Var low;   // [N, H, W, C1]
  Var high;  // [N, H, W, C2]
};

/// Small trainable stand-in for a pretrained image backbone: a stack of
/// 3x3 stride-2 conv/BN/ReLU stages down to H x W at C1 channels, then one
/// stride-1 residual bottleneck to C2 channels at the same resolution.
class VisualBranch {
 public:
  VisualBranch(const VisualConfig& config, ParameterStore& store, Rng& rng,
               const std::string& prefix = "visual");

  /// `images` is [N, input_height, input_width, 3].
  BackboneOutput backbone_forward(const Var& images, Mode mode);
  FeatureSet forward(const Var& images, Mode mode, Pooling pooling = Pooling::Max);

  const VisualConfig& config() const { return config_; }
  void collect(std::vector<NamedBuffer>& out);

 private:
  struct Stage {
    ConvLayer conv;
    BatchNormLayer norm;
  };

  VisualConfig config_;
  std::vector<Stage> stages_;
  Bottleneck high_;
};

/// Splits the height axis into `regions` contiguous, equal, top-to-bottom
/// stripes. Throws ConfigError when H is not divisible by `regions`.
std::vector<Var> segment_stripes(const Var& high, std::size_t regions);

/// low = pool(f_low); parts[k] = pool(stripe k of f_high); global =
/// fuse(parts).
FeatureSet visual_feature_set(const Var& low, const Var& high, std::size_t regions,
                              Pooling pooling = Pooling::Max);

}  // namespace partmatch
