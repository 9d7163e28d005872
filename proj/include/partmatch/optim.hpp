#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "partmatch/autograd.hpp"
#include "partmatch/config.hpp"

namespace partmatch {

/// Learning rate of a 0-based epoch: linear ramp from 0.1 x base over the
/// warm-up epochs, then base, then base x decay_factor from decay_epoch on.
double lr_schedule(std::size_t epoch, const TrainConfig& config);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;
};

/// One bias-corrected Adam update of `param` in place, with decoupled weight
/// decay: param -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * param).
void adam_step(std::span<double> param, std::span<const double> grad, AdamMoments& state,
               double lr, const AdamOptions& options);

/// Adam over the trainable parameters of a store; frozen parameters get no
/// state and are never touched.
class Adam {
 public:
  Adam(ParameterStore& store, AdamOptions options);

  void step(double lr);

  const AdamOptions& options() const { return options_; }
  /// Parameter name -> moments, in store order.
  std::vector<std::pair<std::string, AdamMoments*>> state();

 private:
  std::vector<Parameter*> params_;
  std::vector<AdamMoments> moments_;
  AdamOptions options_;
};

}  // namespace partmatch
