#include "partmatch/visual.hpp"

#include <algorithm>

#include "partmatch/errors.hpp"

namespace partmatch {
namespace {

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

std::size_t log2_exact(std::size_t v) {
  std::size_t n = 0;
  while (v > 1) {
    v >>= 1;
    ++n;
  }
  return n;
}

}  // namespace

std::size_t VisualConfig::downsample_stages() const { return log2_exact(input_height / height); }

void VisualConfig::validate() const {
  if (height == 0 || width == 0 || low_channels == 0 || high_channels == 0 || regions == 0) {
    throw ConfigError("visual: H, W, C1, C2 and K must be >= 1");
  }
  if (height % regions != 0) {
    throw ConfigError("visual: H=" + std::to_string(height) + " is not divisible by K=" +
                      std::to_string(regions));
  }
  if (input_height % height != 0 || input_width % width != 0) {
    throw ConfigError("visual: input size must be an integer multiple of the feature-map size");
  }
  const std::size_t fh = input_height / height, fw = input_width / width;
  if (fh != fw || !is_power_of_two(fh)) {
    throw ConfigError("visual: input " + std::to_string(input_height) + "x" +
                      std::to_string(input_width) + " cannot reach " + std::to_string(height) +
                      "x" + std::to_string(width) +
                      " with stride-2 stages (need one common power-of-two factor)");
  }
}

VisualConfig VisualConfig::reference() {
  return VisualConfig{24, 8, 1024, 2048, 6, 384, 128};
}

VisualBranch::VisualBranch(const VisualConfig& config, ParameterStore& store, Rng& rng,
                           const std::string& prefix)
    : config_((config.validate(), config)),
      high_(store, prefix + ".high", config.low_channels, config.high_channels, {3, 3}, {1, 1},
            rng) {
  const std::size_t n = config_.downsample_stages();
  std::size_t cin = 3;
  stages_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t shift = n - 1 - i;
    const std::size_t cout = std::max<std::size_t>(config_.low_channels >> shift, 4);
    const std::string name = prefix + ".stage" + std::to_string(i);
    stages_.push_back(Stage{ConvLayer(store, name + ".conv", 3, 3, cin, cout, rng, {2, 2}, {1, 1}, false),
                            BatchNormLayer(store, name + ".bn", cout)});
    cin = cout;
  }
  // With no downsampling at all, a 1x1 stage still has to reach C1.
  if (n == 0) {
    stages_.push_back(Stage{ConvLayer(store, prefix + ".stage0.conv", 3, 3, 3, config_.low_channels,
                                      rng, {1, 1}, {1, 1}, false),
                            BatchNormLayer(store, prefix + ".stage0.bn", config_.low_channels)});
  }
}

BackboneOutput VisualBranch::backbone_forward(const Var& images, Mode mode) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != config_.input_height || s[2] != config_.input_width || s[3] != 3) {
    throw ShapeError("visual: expected images [N," + std::to_string(config_.input_height) + "," +
                     std::to_string(config_.input_width) + ",3], got " + shape_string(s));
  }
  Var x = images;
  for (auto& stage : stages_) x = relu(stage.norm(stage.conv(x), mode));
  Var high = high_(x, mode);
  return {x, high};
}

FeatureSet VisualBranch::forward(const Var& images, Mode mode, Pooling pooling) {
  auto maps = backbone_forward(images, mode);
  return visual_feature_set(maps.low, maps.high, config_.regions, pooling);
}

void VisualBranch::collect(std::vector<NamedBuffer>& out) {
  for (auto& stage : stages_) stage.norm.collect(out);
  high_.collect(out);
}

std::vector<Var> segment_stripes(const Var& high, std::size_t regions) {
  const Shape& s = high.shape();
  if (s.size() != 3 && s.size() != 4) throw ShapeError("segment_stripes: expected a feature map");
  const std::size_t h = s.size() == 3 ? s[0] : s[1];
  if (regions == 0 || h % regions != 0) {
    throw ConfigError("segment_stripes: H=" + std::to_string(h) + " is not divisible by K=" +
                      std::to_string(regions));
  }
  const std::size_t rows = h / regions;
  std::vector<Var> stripes;
  stripes.reserve(regions);
  for (std::size_t k = 0; k < regions; ++k) stripes.push_back(slice_rows(high, k * rows, (k + 1) * rows));
  return stripes;
}

FeatureSet visual_feature_set(const Var& low, const Var& high, std::size_t regions,
                              Pooling pooling) {
  FeatureSet out;
  out.low = pool(low, pooling);
  for (const auto& stripe : segment_stripes(high, regions)) out.parts.push_back(pool(stripe, pooling));
  out.global = fuse(out.parts, pooling);
  return out;
}

}  // namespace partmatch
