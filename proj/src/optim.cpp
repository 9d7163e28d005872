#include "partmatch/optim.hpp"

#include <cmath>

#include "partmatch/errors.hpp"

namespace partmatch {

double lr_schedule(std::size_t epoch, const TrainConfig& config) {
  if (epoch >= config.epochs) {
    throw ConfigError("lr_schedule: epoch " + std::to_string(epoch) + " outside [0, " +
                      std::to_string(config.epochs) + ")");
  }
  if (epoch < config.warmup_epochs) {
    const double frac = static_cast<double>(epoch) / static_cast<double>(config.warmup_epochs);
    return config.base_lr * (0.1 + 0.9 * frac);
  }
  if (epoch < config.decay_epoch) return config.base_lr;
  return config.base_lr * config.decay_factor;
}

void adam_step(std::span<double> param, std::span<const double> grad, AdamMoments& state,
               double lr, const AdamOptions& o) {
  if (grad.size() != param.size()) throw ShapeError("adam_step: gradient and parameter sizes differ");
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  if (state.m.size() != param.size() || state.v.size() != param.size()) {
    throw ShapeError("adam_step: optimizer state does not match the parameter");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    state.m[i] = o.beta1 * state.m[i] + (1.0 - o.beta1) * grad[i];
    state.v[i] = o.beta2 * state.v[i] + (1.0 - o.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    param[i] -= lr * (m_hat / (std::sqrt(v_hat) + o.eps) + o.weight_decay * param[i]);
  }
}

Adam::Adam(ParameterStore& store, AdamOptions options)
    : params_(store.trainable()), options_(options) {
  moments_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    moments_[i].m.assign(params_[i]->var.size(), 0.0);
    moments_[i].v.assign(params_[i]->var.size(), 0.0);
  }
}

void Adam::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::vector<double> grad = params_[i]->var.grad();
    adam_step(params_[i]->var.mutable_value().values(), grad, moments_[i], lr, options_);
  }
}

std::vector<std::pair<std::string, AdamMoments*>> Adam::state() {
  std::vector<std::pair<std::string, AdamMoments*>> out;
  for (std::size_t i = 0; i < params_.size(); ++i) out.emplace_back(params_[i]->name, &moments_[i]);
  return out;
}

}  // namespace partmatch
