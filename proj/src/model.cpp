#include "partmatch/model.hpp"

#include "partmatch/errors.hpp"

namespace partmatch {

void ModelConfig::validate() const {
  visual.validate();
  textual.validate();
  if (visual.low_channels != textual.low_channels || visual.high_channels != textual.high_channels ||
      visual.regions != textual.regions) {
    throw ConfigError("model: visual and textual branches disagree on C1, C2 or K");
  }
}

void ModelConfig::set_regions(std::size_t k) {
  visual.regions = k;
  textual.regions = k;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.visual = VisualConfig{4, 2, 8, 16, 2, 16, 8};
  c.textual = TextualConfig{8, 12, 8, 16, 2, 1, 0, 32};
  return c;
}

Model::Model(const ModelConfig& config, std::uint64_t seed)
    : config_((config.validate(), config)),
      init_rng_(seed),
      visual_(config_.visual, params_, init_rng_),
      textual_(config_.textual, params_, init_rng_) {}

FeatureSet Model::encode_images(const Var& images, Mode mode) {
  return visual_.forward(images, mode, config_.pooling);
}

FeatureSet Model::encode_texts(std::span<const int> ids, std::size_t batch, Mode mode) {
  return textual_.forward(ids, batch, mode, config_.pooling);
}

std::vector<NamedBuffer> Model::buffers() {
  std::vector<NamedBuffer> out;
  visual_.collect(out);
  textual_.collect(out);
  return out;
}

}  // namespace partmatch
