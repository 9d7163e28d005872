#include "partmatch/textual.hpp"

#include <algorithm>

#include "partmatch/errors.hpp"

namespace partmatch {

TokenSequence tokenize_and_pad(std::span<const int> raw_ids, std::size_t length) {
  if (length < 2) throw ConfigError("text length L must be >= 2");
  std::vector<int> full;
  full.reserve(raw_ids.size() + 2);
  full.push_back(kStartToken);
  for (int id : raw_ids) {
    if (id < 0) throw LookupError("negative token id " + std::to_string(id));
    full.push_back(id);
  }
  full.push_back(kEndToken);

  TokenSequence seq;
  seq.valid_length = std::min(full.size(), length);
  seq.ids.assign(full.begin(), full.begin() + static_cast<long>(seq.valid_length));
  seq.ids.resize(length, kPadToken);
  return seq;
}

void TextualConfig::validate() const {
  if (length < 2) throw ConfigError("textual: L must be >= 2");
  if (embed_dim == 0 || low_channels == 0 || high_channels == 0 || regions == 0) {
    throw ConfigError("textual: D, C1, C2 and K must be >= 1");
  }
  if (bottlenecks == 0) throw ConfigError("textual: P must be >= 1");
  if (downsample_steps > 3) throw ConfigError("textual: downsample_steps must be in {0,1,2,3}");
  if (downsample_steps > bottlenecks) {
    throw ConfigError("textual: downsample_steps (" + std::to_string(downsample_steps) +
                      ") exceeds bottlenecks per branch (" + std::to_string(bottlenecks) + ")");
  }
  if (length % (std::size_t{1} << downsample_steps) != 0) {
    throw ConfigError("textual: L is not divisible by 2^downsample_steps");
  }
  if (vocab_size <= static_cast<std::size_t>(kFirstContentToken)) {
    throw ConfigError("textual: vocab_size must exceed the reserved marker ids");
  }
}

TextualConfig TextualConfig::reference() {
  return TextualConfig{64, 768, 1024, 2048, 6, 3, 0, 1024};
}

TextualBranch::TextualBranch(const TextualConfig& config, ParameterStore& store, Rng& rng,
                             const std::string& prefix)
    : config_((config.validate(), config)),
      table_([&] {
        Tensor t(Shape{config.vocab_size, config.embed_dim});
        for (auto& v : t.data()) v = rng.normal();
        return store.add(prefix + ".embedding", std::move(t), /*frozen=*/true);
      }()),
      project_(store, prefix + ".project", 1, 1, config.embed_dim, config.low_channels, rng) {
  branches_.resize(config_.regions);
  for (std::size_t k = 0; k < config_.regions; ++k) {
    auto& branch = branches_[k];
    branch.reserve(config_.bottlenecks);
    for (std::size_t p = 0; p < config_.bottlenecks; ++p) {
      const std::size_t cin = p == 0 ? config_.low_channels : config_.high_channels;
      const Pair stride{1, p < config_.downsample_steps ? std::size_t{2} : std::size_t{1}};
      branch.emplace_back(store,
                          prefix + ".branch" + std::to_string(k) + ".bottleneck" + std::to_string(p),
                          cin, config_.high_channels, Pair{1, 3}, stride, rng);
    }
  }
}

Var TextualBranch::embed(std::span<const int> ids, std::size_t batch) const {
  return embedding(table_, ids, batch, config_.length);
}

Var TextualBranch::project_low(const Var& embedded) const { return project_(embedded); }

Var TextualBranch::branch_forward(const Var& low, std::size_t k, Mode mode) {
  if (k >= branches_.size()) {
    throw ConfigError("textual: branch index " + std::to_string(k) + " out of range");
  }
  Var x = low;
  for (auto& bottleneck : branches_[k]) x = bottleneck(x, mode);
  return x;
}

FeatureSet TextualBranch::forward(std::span<const int> ids, std::size_t batch, Mode mode,
                                  Pooling pooling) {
  Var low = project_low(embed(ids, batch));
  std::vector<Var> maps;
  maps.reserve(config_.regions);
  for (std::size_t k = 0; k < config_.regions; ++k) maps.push_back(branch_forward(low, k, mode));
  return textual_feature_set(low, maps, pooling);
}

void TextualBranch::collect(std::vector<NamedBuffer>& out) {
  for (auto& branch : branches_) {
    for (auto& bottleneck : branch) bottleneck.collect(out);
  }
}

FeatureSet textual_feature_set(const Var& low, std::span<const Var> branch_maps, Pooling pooling) {
  if (branch_maps.empty()) throw ShapeError("textual_feature_set: no branch outputs");
  FeatureSet out;
  out.low = pool(low, pooling);
  for (const auto& map : branch_maps) out.parts.push_back(pool(map, pooling));
  out.global = fuse(out.parts, pooling);
  return out;
}

}  // namespace partmatch
