#pragma once

#include <cstdint>
#include <string>

#include "partmatch/cmpm.hpp"
#include "partmatch/model.hpp"

namespace partmatch {

/// Every knob of a training run. Defaults are the desk-scale setup; see
/// `reference()` for the full-size recipe.
struct TrainConfig {
  std::size_t epochs = 30;
  double base_lr = 3e-3;
  std::size_t warmup_epochs = 3;
  std::size_t decay_epoch = 20;
  double decay_factor = 0.1;
  double weight_decay = 4e-5;
  std::size_t batch_size = 16;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double flip_probability = 0.5;
  std::size_t eval_interval = 5;
  /// Sampled batches per epoch. 0 means one pass over the training texts:
  /// ceil(texts / batch_size).
  std::size_t steps_per_epoch = 128;
  std::uint64_t seed = 7;
  ModelConfig model;
  LossWeights loss;

  void validate() const;

  /// 80 epochs, lr 3e-3 with a 10-epoch warm-up and x0.1 after epoch 50,
  /// weight decay 4e-5, N 64, one pass over the data per epoch, full-size
  /// branches.
  static TrainConfig reference();
};

/// JSON document with top-level `seed` and sections `train`, `model`,
/// `visual`, `textual`, `loss`. Missing fields keep their defaults; unknown
/// keys are a ConfigError.
TrainConfig parse_train_config(const std::string& json_text);
std::string to_json_text(const TrainConfig& config);

}  // namespace partmatch
