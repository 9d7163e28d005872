#pragma once

#include <string>
#include <vector>

#include "partmatch/autograd.hpp"

namespace partmatch {

/// Low-level, K local and one global representation of a batch. Each
/// member is [N, C] (C1 for `low`, C2 for the rest).
struct FeatureSet {
  Var low;
  std::vector<Var> parts;
  Var global;
};

using VisualFeatureSet = FeatureSet;
using TextualFeatureSet = FeatureSet;

/// Spatial pooling and local-to-global fusion rule. `Max` is the reference
/// model; `Avg` and `MaxPlusAvg` exist for the fusion ablation.
enum class Pooling { Max, Avg, MaxPlusAvg };

std::string to_string(Pooling pooling);
Pooling parse_pooling(const std::string& text);

/// Pools a [H, W, C] / [N, H, W, C] map to [C] / [N, C].
Var pool(const Var& map, Pooling pooling);
/// Fuses K same-shaped local vectors into one.
Var fuse(const std::vector<Var>& parts, Pooling pooling);

}  // namespace partmatch
