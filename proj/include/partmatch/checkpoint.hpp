#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "partmatch/config.hpp"
#include "partmatch/model.hpp"

namespace partmatch {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;

  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

/// Complete training state. Array names carry a kind prefix: `param/`,
/// `buffer/` (batch-norm running statistics), `adam_m/`, `adam_v/`.
struct Checkpoint {
  TrainConfig config;
  std::size_t epoch = 0;       // completed epochs
  std::size_t step = 0;        // completed optimizer steps
  std::size_t adam_step = 0;
  std::string rng_state;       // batch sampler
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;

  /// Text header `PARTMATCH-CHECKPOINT <version>`, the manifest byte count on
  /// its own line, a JSON manifest (names, shapes, dtype, offsets, epoch,
  /// seed, config echo), then the little-endian float-64 payload.
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  friend bool operator==(const Checkpoint& a, const Checkpoint& b);
};

inline constexpr int kCheckpointVersion = 1;

/// Copies parameters and running statistics from a checkpoint into a model
/// built from the same configuration. Names and shapes must agree.
void load_model_state(Model& model, const Checkpoint& checkpoint);

}  // namespace partmatch
