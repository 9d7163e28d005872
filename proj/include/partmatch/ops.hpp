#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "partmatch/autograd.hpp"

// Differentiable primitives. Spatial tensors are channels-last: a single
// map is [H, W, C], a batch is [N, H, W, C]. Every max-type reduction breaks
// ties by first occurrence in row-major order, forward and backward.
namespace partmatch {

struct Pair {
  std::size_t h = 1;
  std::size_t w = 1;
};

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
/// Sum of all elements as a scalar.
Var sum(const Var& a);
Var relu(const Var& x);
/// Natural logarithm; requires strictly positive input.
Var log(const Var& x);

/// Cross-correlation with a [kh, kw, Cin, Cout] kernel and per-output bias.
/// Output extent per axis is floor((in + 2*pad - k) / stride) + 1.
Var conv2d(const Var& input, const Var& weight, const Var& bias, Pair stride = {},
           Pair padding = {0, 0});

enum class Mode { Train, Eval };

/// Running statistics of a batch-norm layer.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEpsilon = 1e-5;

/// Per-channel normalization over every axis but the last. Train mode uses
/// batch statistics and moves `state` towards them by `momentum` (the
/// running variance uses the unbiased estimate); eval mode uses `state`.
Var batch_norm(const Var& input, const Var& gamma, const Var& beta, BatchNormState& state,
               Mode mode, double epsilon = kBatchNormEpsilon,
               double momentum = kBatchNormMomentum);

/// [H, W, C] -> [C] or [N, H, W, C] -> [N, C]. Gradient goes to the argmax.
Var global_max_pool(const Var& input);
/// Same shapes as global_max_pool, spatial mean.
Var global_avg_pool(const Var& input);

/// Rows [begin, end) of the height axis of a [H, W, C] or [N, H, W, C] map.
Var slice_rows(const Var& input, std::size_t begin, std::size_t end);

/// Element-wise maximum across same-shaped tensors.
Var elementwise_max(std::span<const Var> inputs);
/// Element-wise mean across same-shaped tensors.
Var elementwise_mean(std::span<const Var> inputs);

/// Gathers rows of a [V, D] table for `ids` laid out as `batch` sequences of
/// `length` tokens; the result is [batch, 1, length, D].
Var embedding(const Var& table, std::span<const int> ids, std::size_t batch, std::size_t length);

/// v / ||v|| for a vector, or per row for a matrix. Zero rows are a
/// NumericError.
Var l2_normalize(const Var& x);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
/// Numerically stable softmax along the last axis of a matrix.
Var row_softmax(const Var& x);

/// Reflects the width axis of a [H, W, C] image.
Tensor flip_width(const Tensor& image);

}  // namespace partmatch
