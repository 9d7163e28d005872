#include "partmatch/layers.hpp"

#include <cmath>

namespace partmatch {

ConvLayer::ConvLayer(ParameterStore& store, const std::string& prefix, std::size_t kh,
                     std::size_t kw, std::size_t cin, std::size_t cout, Rng& rng, Pair stride_,
                     Pair padding_, bool trainable_bias)
    : stride(stride_), padding(padding_) {
  Tensor w(Shape{kh, kw, cin, cout});
  const double stddev = std::sqrt(2.0 / static_cast<double>(kh * kw * cin));
  for (auto& v : w.data()) v = rng.normal(0.0, stddev);
  weight = store.add(prefix + ".weight", std::move(w));
  bias = trainable_bias ? store.add(prefix + ".bias", Tensor(Shape{cout}, 0.0))
                        : Var(Tensor(Shape{cout}, 0.0), false, prefix + ".bias");
}

BatchNormLayer::BatchNormLayer(ParameterStore& store, const std::string& prefix_,
                               std::size_t channels)
    : state(channels), prefix(prefix_) {
  gamma = store.add(prefix + ".gamma", Tensor(Shape{channels}, 1.0));
  beta = store.add(prefix + ".beta", Tensor(Shape{channels}, 0.0));
}

void BatchNormLayer::collect(std::vector<NamedBuffer>& out) {
  out.push_back({prefix + ".running_mean", &state.running_mean});
  out.push_back({prefix + ".running_var", &state.running_var});
}

namespace {

std::size_t bottleneck_width(std::size_t cout) { return cout >= 4 ? cout / 4 : 1; }

}  // namespace

Bottleneck::Bottleneck(ParameterStore& store, const std::string& prefix, std::size_t cin,
                       std::size_t cout, Pair middle_kernel, Pair stride, Rng& rng)
    : reduce_(store, prefix + ".reduce", 1, 1, cin, bottleneck_width(cout), rng, stride, {0, 0},
               false),
      middle_(store, prefix + ".middle", middle_kernel.h, middle_kernel.w, bottleneck_width(cout),
              bottleneck_width(cout), rng, {1, 1}, {middle_kernel.h / 2, middle_kernel.w / 2}, false),
      expand_(store, prefix + ".expand", 1, 1, bottleneck_width(cout), cout, rng, {1, 1}, {0, 0}, false),
      bn1_(store, prefix + ".bn1", bottleneck_width(cout)),
      bn2_(store, prefix + ".bn2", bottleneck_width(cout)),
      bn3_(store, prefix + ".bn3", cout) {
  if (cin != cout || stride.h != 1 || stride.w != 1) {
    skip_conv_.emplace(store, prefix + ".skip", 1, 1, cin, cout, rng, stride, Pair{0, 0}, false);
    skip_bn_.emplace(store, prefix + ".skip_bn", cout);
  }
}

Var Bottleneck::operator()(const Var& x, Mode mode) {
  Var h = relu(bn1_(reduce_(x), mode));
  h = relu(bn2_(middle_(h), mode));
  h = bn3_(expand_(h), mode);
  Var skip = skip_conv_ ? (*skip_bn_)((*skip_conv_)(x), mode) : x;
  return relu(add(h, skip));
}

void Bottleneck::collect(std::vector<NamedBuffer>& out) {
  bn1_.collect(out);
  bn2_.collect(out);
  bn3_.collect(out);
  if (skip_bn_) skip_bn_->collect(out);
}

}  // namespace partmatch
