#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "partmatch/features.hpp"
#include "partmatch/layers.hpp"

namespace partmatch {

inline constexpr int kPadToken = 0;
inline constexpr int kStartToken = 1;
inline constexpr int kEndToken = 2;
/// First id available to content tokens.
inline constexpr int kFirstContentToken = 3;

struct TokenSequence {
  std::vector<int> ids;  // exactly L entries
  std::size_t valid_length = 0;
};

/// [start] + raw + [end], cut to the first L tokens or zero-padded to L.
TokenSequence tokenize_and_pad(std::span<const int> raw_ids, std::size_t length);

struct TextualConfig {
  std::size_t length = 16;          // L
  std::size_t embed_dim = 24;       // D
  std::size_t low_channels = 32;    // C1
  std::size_t high_channels = 64;   // C2
  std::size_t regions = 3;          // K branches
  std::size_t bottlenecks = 2;      // P per branch
  std::size_t downsample_steps = 0;
  std::size_t vocab_size = 64;

  /// Width of every branch output: L / 2^downsample_steps.
  std::size_t output_length() const { return length >> downsample_steps; }
  void validate() const;

  /// L 64, D 768, C1 1024, C2 2048, K 6, P 3, no downsampling. The
  /// vocabulary is kept small; only the table row count depends on it.
  static TextualConfig reference();
};

/// Frozen embedding table -> 1x1 projection to C1 (no activation) -> K
/// independent residual branches of P bottlenecks with 1x3 middle kernels.
class TextualBranch {
 public:
  TextualBranch(const TextualConfig& config, ParameterStore& store, Rng& rng,
                const std::string& prefix = "text");

  /// `ids` holds `batch` padded sequences back to back; returns [N, 1, L, D].
  Var embed(std::span<const int> ids, std::size_t batch) const;
  /// [N, 1, L, D] -> [N, 1, L, C1].
  Var project_low(const Var& embedded) const;
  /// [N, 1, L, C1] -> [N, 1, L', C2] through branch `k` (0-based).
  Var branch_forward(const Var& low, std::size_t k, Mode mode);
  FeatureSet forward(std::span<const int> ids, std::size_t batch, Mode mode,
                     Pooling pooling = Pooling::Max);

  const TextualConfig& config() const { return config_; }
  const Var& table() const { return table_; }
  std::vector<Bottleneck>& branch(std::size_t k) { return branches_.at(k); }
  void collect(std::vector<NamedBuffer>& out);

 private:
  TextualConfig config_;
  Var table_;
  ConvLayer project_;
  std::vector<std::vector<Bottleneck>> branches_;
};

/// low = pool(f_low); parts[k] = pool(branch k); global = fuse(parts).
FeatureSet textual_feature_set(const Var& low, std::span<const Var> branch_maps,
                               Pooling pooling = Pooling::Max);

}  // namespace partmatch
