#pragma once

#include <optional>
#include <string>
#include <vector>

#include "partmatch/autograd.hpp"
#include "partmatch/ops.hpp"
#include "partmatch/rng.hpp"

namespace partmatch {

/// Named reference to layer state that is not a parameter (running stats).
struct NamedBuffer {
  std::string name;
  std::vector<double>* values;
};

struct ConvLayer {
  Var weight;
  Var bias;
  Pair stride;
  Pair padding;

  /// He-normal weights registered as `<prefix>.weight`. With `trainable_bias`
  /// a zero bias is registered as `<prefix>.bias`; otherwise the bias is a
  /// constant zero (convolutions feeding batch norm).
  ConvLayer(ParameterStore& store, const std::string& prefix, std::size_t kh, std::size_t kw,
            std::size_t cin, std::size_t cout, Rng& rng, Pair stride = {}, Pair padding = {0, 0},
            bool trainable_bias = true);

  Var operator()(const Var& x) const { return conv2d(x, weight, bias, stride, padding); }
};

struct BatchNormLayer {
  Var gamma;
  Var beta;
  BatchNormState state;
  std::string prefix;

  BatchNormLayer(ParameterStore& store, const std::string& prefix, std::size_t channels);

  Var operator()(const Var& x, Mode mode) { return batch_norm(x, gamma, beta, state, mode); }
  void collect(std::vector<NamedBuffer>& out);
};

/// Residual bottleneck: 1x1 reduce -> BN -> ReLU -> middle -> BN -> ReLU ->
/// 1x1 expand -> BN, plus skip, then ReLU. The skip is a 1x1 conv + BN when
/// channels or stride change, identity otherwise. The stride sits on the
/// reduce conv and on the skip conv.
class Bottleneck {
 public:
  Bottleneck(ParameterStore& store, const std::string& prefix, std::size_t cin, std::size_t cout,
             Pair middle_kernel, Pair stride, Rng& rng);

  Var operator()(const Var& x, Mode mode);
  void collect(std::vector<NamedBuffer>& out);
  bool has_projection() const { return skip_conv_.has_value(); }
  BatchNormLayer& final_norm() { return bn3_; }

 private:
  ConvLayer reduce_, middle_, expand_;
  BatchNormLayer bn1_, bn2_, bn3_;
  std::optional<ConvLayer> skip_conv_;
  std::optional<BatchNormLayer> skip_bn_;
};

}  // namespace partmatch
