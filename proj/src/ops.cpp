#include "partmatch/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "partmatch/errors.hpp"

namespace partmatch {
namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

// Views a [H, W, C] or [N, H, W, C] tensor as batch, height, width, channels.
struct Spatial {
  std::size_t n, h, w, c;
  bool batched;
};

Spatial spatial_dims(const Shape& s, const char* op) {
  if (s.size() == 3) return {1, s[0], s[1], s[2], false};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
  throw ShapeError(std::string(op) + ": expected [H,W,C] or [N,H,W,C], got " + shape_string(s));
}

Shape spatial_shape(const Spatial& d, std::size_t h, std::size_t w, std::size_t c) {
  return d.batched ? Shape{d.n, h, w, c} : Shape{h, w, c};
}

Shape pooled_shape(const Spatial& d) { return d.batched ? Shape{d.n, d.c} : Shape{d.c}; }

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    for (auto& parent : self.parents) {
      if (!parent->requires_grad) continue;
      auto& g = parent->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.parents[0];
    Node& y = *self.parents[1];
    if (x.requires_grad) {
      auto& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      auto& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return make_node(std::move(out), {a}, [factor](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return make_node(Tensor::scalar(total), {a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return make_node(std::move(out), {x}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const auto& in = self.parents[0]->value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Var log(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.data()) {
    if (!(v > 0.0)) throw NumericError("log of non-positive value");
    v = std::log(v);
  }
  return make_node(std::move(out), {x}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const auto& in = self.parents[0]->value;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / in[i];
  });
}

Var conv2d(const Var& input, const Var& weight, const Var& bias, Pair stride, Pair padding) {
  const Spatial d = spatial_dims(input.shape(), "conv2d");
  const Shape& ws = weight.shape();
  if (ws.size() != 4) throw ShapeError("conv2d: weight must be [kh,kw,Cin,Cout], got " + shape_string(ws));
  const std::size_t kh = ws[0], kw = ws[1], cin = ws[2], cout = ws[3];
  if (cin != d.c) {
    throw ShapeError("conv2d: input has " + std::to_string(d.c) + " channels, weight expects " +
                     std::to_string(cin));
  }
  if (bias.shape() != Shape{cout}) throw ShapeError("conv2d: bias must be [" + std::to_string(cout) + "]");
  if (stride.h == 0 || stride.w == 0) throw ShapeError("conv2d: stride must be >= 1");
  if (d.h + 2 * padding.h < kh || d.w + 2 * padding.w < kw) {
    throw ShapeError("conv2d: kernel does not fit padded input");
  }
  const std::size_t oh = (d.h + 2 * padding.h - kh) / stride.h + 1;
  const std::size_t ow = (d.w + 2 * padding.w - kw) / stride.w + 1;

  Tensor out(spatial_shape(d, oh, ow, cout));
  const double* x = input.value().data().data();
  const double* w = weight.value().data().data();
  const double* b = bias.value().data().data();
  double* y = out.data().data();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double* yrow = y + ((n * oh + oy) * ow + ox) * cout;
        std::copy(b, b + cout, yrow);
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const long iy = static_cast<long>(oy * stride.h + ky) - static_cast<long>(padding.h);
          if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const long ix = static_cast<long>(ox * stride.w + kx) - static_cast<long>(padding.w);
            if (ix < 0 || ix >= static_cast<long>(d.w)) continue;
            const double* xin = x + ((n * d.h + iy) * d.w + ix) * cin;
            const double* wk = w + (ky * kw + kx) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double xv = xin[ci];
              const double* wrow = wk + ci * cout;
              for (std::size_t co = 0; co < cout; ++co) yrow[co] += xv * wrow[co];
            }
          }
        }
      }
    }
  }

  return make_node(std::move(out), {input, weight, bias},
                   [d, kh, kw, cin, cout, oh, ow, stride, padding](Node& self) {
    Node& in = *self.parents[0];
    Node& wt = *self.parents[1];
    Node& bs = *self.parents[2];
    const double* gy = self.grad.data();
    const double* x = in.value.data().data();
    const double* w = wt.value.data().data();
    double* gx = in.requires_grad ? in.grad_buffer().data() : nullptr;
    double* gw = wt.requires_grad ? wt.grad_buffer().data() : nullptr;
    double* gb = bs.requires_grad ? bs.grad_buffer().data() : nullptr;
    for (std::size_t n = 0; n < d.n; ++n) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double* grow = gy + ((n * oh + oy) * ow + ox) * cout;
          if (gb) {
            for (std::size_t co = 0; co < cout; ++co) gb[co] += grow[co];
          }
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const long iy = static_cast<long>(oy * stride.h + ky) - static_cast<long>(padding.h);
            if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const long ix = static_cast<long>(ox * stride.w + kx) - static_cast<long>(padding.w);
              if (ix < 0 || ix >= static_cast<long>(d.w)) continue;
              const std::size_t in_off = ((n * d.h + iy) * d.w + ix) * cin;
              const std::size_t w_off = (ky * kw + kx) * cin * cout;
              for (std::size_t ci = 0; ci < cin; ++ci) {
                const double* wrow = w + w_off + ci * cout;
                if (gx) {
                  double acc = 0.0;
                  for (std::size_t co = 0; co < cout; ++co) acc += grow[co] * wrow[co];
                  gx[in_off + ci] += acc;
                }
                if (gw) {
                  const double xv = x[in_off + ci];
                  double* gwrow = gw + w_off + ci * cout;
                  for (std::size_t co = 0; co < cout; ++co) gwrow[co] += xv * grow[co];
                }
              }
            }
          }
        }
      }
    }
  });
}

Var batch_norm(const Var& input, const Var& gamma, const Var& beta, BatchNormState& state,
               Mode mode, double epsilon, double momentum) {
  if (input.shape().empty()) throw ShapeError("batch_norm: input must have a channel axis");
  const std::size_t c = input.shape().back();
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw ShapeError("batch_norm: gamma/beta must be [" + std::to_string(c) + "]");
  }
  if (state.running_mean.size() != c || state.running_var.size() != c) {
    throw ShapeError("batch_norm: running state has wrong channel count");
  }
  const std::size_t m = input.size() / c;
  const auto& x = input.value().data();
  std::vector<double> mean(c, 0.0), inv_std(c, 0.0);
  if (mode == Mode::Train) {
    std::vector<double> var(c, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < c; ++k) mean[k] += x[i * c + k];
    }
    for (auto& v : mean) v /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        const double dx = x[i * c + k] - mean[k];
        var[k] += dx * dx;
      }
    }
    for (std::size_t k = 0; k < c; ++k) {
      const double biased = var[k] / static_cast<double>(m);
      const double unbiased = m > 1 ? var[k] / static_cast<double>(m - 1) : biased;
      inv_std[k] = 1.0 / std::sqrt(biased + epsilon);
      state.running_mean[k] = (1.0 - momentum) * state.running_mean[k] + momentum * mean[k];
      state.running_var[k] = (1.0 - momentum) * state.running_var[k] + momentum * unbiased;
    }
  } else {
    for (std::size_t k = 0; k < c; ++k) {
      mean[k] = state.running_mean[k];
      inv_std[k] = 1.0 / std::sqrt(state.running_var[k] + epsilon);
    }
  }

  Tensor xhat(input.shape());
  Tensor out(input.shape());
  const auto& g = gamma.value().data();
  const auto& b = beta.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const double h = (x[i * c + k] - mean[k]) * inv_std[k];
      xhat[i * c + k] = h;
      out[i * c + k] = g[k] * h + b[k];
    }
  }

  return make_node(std::move(out), {input, gamma, beta},
                   [xhat = std::move(xhat), inv_std, m, c, mode](Node& self) {
    Node& in = *self.parents[0];
    Node& gm = *self.parents[1];
    Node& bt = *self.parents[2];
    const auto& gy = self.grad;
    std::vector<double> sum_gy(c, 0.0), sum_gy_xhat(c, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        sum_gy[k] += gy[i * c + k];
        sum_gy_xhat[k] += gy[i * c + k] * xhat[i * c + k];
      }
    }
    if (gm.requires_grad) {
      auto& gg = gm.grad_buffer();
      for (std::size_t k = 0; k < c; ++k) gg[k] += sum_gy_xhat[k];
    }
    if (bt.requires_grad) {
      auto& gb = bt.grad_buffer();
      for (std::size_t k = 0; k < c; ++k) gb[k] += sum_gy[k];
    }
    if (in.requires_grad) {
      auto& gx = in.grad_buffer();
      const auto& gamma_v = gm.value.data();
      const double inv_m = 1.0 / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < c; ++k) {
          const double scale_k = gamma_v[k] * inv_std[k];
          if (mode == Mode::Train) {
            gx[i * c + k] += scale_k * (gy[i * c + k] - inv_m * sum_gy[k] -
                                        xhat[i * c + k] * inv_m * sum_gy_xhat[k]);
          } else {
            gx[i * c + k] += scale_k * gy[i * c + k];
          }
        }
      }
    }
  });
}

Var global_max_pool(const Var& input) {
  const Spatial d = spatial_dims(input.shape(), "global_max_pool");
  const std::size_t area = d.h * d.w;
  Tensor out(pooled_shape(d));
  std::vector<std::size_t> argmax(d.n * d.c);
  const auto& x = input.value().data();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t k = 0; k < d.c; ++k) {
      std::size_t best = n * area * d.c + k;
      for (std::size_t p = 1; p < area; ++p) {
        const std::size_t idx = (n * area + p) * d.c + k;
        if (x[idx] > x[best]) best = idx;
      }
      argmax[n * d.c + k] = best;
      out[n * d.c + k] = x[best];
    }
  }
  return make_node(std::move(out), {input}, [argmax = std::move(argmax)](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad[i];
  });
}

Var global_avg_pool(const Var& input) {
  const Spatial d = spatial_dims(input.shape(), "global_avg_pool");
  const std::size_t area = d.h * d.w;
  Tensor out(pooled_shape(d));
  const auto& x = input.value().data();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t p = 0; p < area; ++p) {
      for (std::size_t k = 0; k < d.c; ++k) out[n * d.c + k] += x[(n * area + p) * d.c + k];
    }
  }
  const double inv = 1.0 / static_cast<double>(area);
  for (auto& v : out.data()) v *= inv;
  return make_node(std::move(out), {input}, [d, area, inv](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t n = 0; n < d.n; ++n) {
      for (std::size_t p = 0; p < area; ++p) {
        for (std::size_t k = 0; k < d.c; ++k) g[(n * area + p) * d.c + k] += inv * self.grad[n * d.c + k];
      }
    }
  });
}

Var slice_rows(const Var& input, std::size_t begin, std::size_t end) {
  const Spatial d = spatial_dims(input.shape(), "slice_rows");
  if (begin >= end || end > d.h) {
    throw ShapeError("slice_rows: invalid row range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") of " + std::to_string(d.h));
  }
  const std::size_t rows = end - begin;
  const std::size_t row_len = d.w * d.c;
  Tensor out(spatial_shape(d, rows, d.w, d.c));
  const auto& x = input.value().data();
  for (std::size_t n = 0; n < d.n; ++n) {
    const auto src = x.begin() + static_cast<long>((n * d.h + begin) * row_len);
    std::copy(src, src + static_cast<long>(rows * row_len),
              out.data().begin() + static_cast<long>(n * rows * row_len));
  }
  return make_node(std::move(out), {input}, [d, begin, rows, row_len](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t n = 0; n < d.n; ++n) {
      for (std::size_t i = 0; i < rows * row_len; ++i) {
        g[(n * d.h + begin) * row_len + i] += self.grad[n * rows * row_len + i];
      }
    }
  });
}

Var elementwise_max(std::span<const Var> inputs) {
  if (inputs.empty()) throw ShapeError("elementwise_max: empty input list");
  for (const auto& v : inputs) require_same_shape(v, inputs[0], "elementwise_max");
  Tensor out = inputs[0].value();
  std::vector<std::size_t> winner(out.size(), 0);
  for (std::size_t k = 1; k < inputs.size(); ++k) {
    const auto& x = inputs[k].value();
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (x[i] > out[i]) {
        out[i] = x[i];
        winner[i] = k;
      }
    }
  }
  return make_node(std::move(out), std::vector<Var>(inputs.begin(), inputs.end()),
                   [winner = std::move(winner)](Node& self) {
    for (std::size_t i = 0; i < winner.size(); ++i) {
      Node& p = *self.parents[winner[i]];
      if (p.requires_grad) p.grad_buffer()[i] += self.grad[i];
    }
  });
}

Var elementwise_mean(std::span<const Var> inputs) {
  if (inputs.empty()) throw ShapeError("elementwise_mean: empty input list");
  for (const auto& v : inputs) require_same_shape(v, inputs[0], "elementwise_mean");
  Tensor out(inputs[0].shape());
  for (const auto& v : inputs) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v.value()[i];
  }
  const double inv = 1.0 / static_cast<double>(inputs.size());
  for (auto& v : out.data()) v *= inv;
  return make_node(std::move(out), std::vector<Var>(inputs.begin(), inputs.end()), [inv](Node& self) {
    for (auto& parent : self.parents) {
      if (!parent->requires_grad) continue;
      auto& g = parent->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += inv * self.grad[i];
    }
  });
}

Var embedding(const Var& table, std::span<const int> ids, std::size_t batch, std::size_t length) {
  if (table.shape().size() != 2) throw ShapeError("embedding: table must be [V,D]");
  if (ids.size() != batch * length) throw ShapeError("embedding: id count does not match batch x length");
  const std::size_t vocab = table.shape()[0], dim = table.shape()[1];
  Tensor out(Shape{batch, 1, length, dim});
  const auto& t = table.value().data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw LookupError("token id " + std::to_string(ids[i]) + " outside vocabulary of size " +
                        std::to_string(vocab));
    }
    std::copy_n(t.begin() + static_cast<long>(ids[i] * dim), dim,
                out.data().begin() + static_cast<long>(i * dim));
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return make_node(std::move(out), {table}, [idv = std::move(idv), dim](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < idv.size(); ++i) {
      for (std::size_t j = 0; j < dim; ++j) g[idv[i] * dim + j] += self.grad[i * dim + j];
    }
  });
}

Var l2_normalize(const Var& x) {
  const Shape& s = x.shape();
  if (s.size() != 1 && s.size() != 2) throw ShapeError("l2_normalize: expected vector or matrix");
  const std::size_t rows = s.size() == 1 ? 1 : s[0];
  const std::size_t cols = s.back();
  Tensor out = x.value();
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sq += out[r * cols + j] * out[r * cols + j];
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericError("l2_normalize: row " + std::to_string(r) + " is not finite");
    if (!(norm > 0.0)) throw NumericError("l2_normalize: row " + std::to_string(r) + " has zero norm");
    norms[r] = norm;
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] /= norm;
  }
  Tensor unit = out;
  return make_node(std::move(out), {x}, [unit = std::move(unit), norms, rows, cols](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += self.grad[r * cols + j] * unit[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        g[r * cols + j] += (self.grad[r * cols + j] - dot * unit[r * cols + j]) / norms[r];
      }
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(sa) + " and " + shape_string(sb));
  }
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  Tensor out(Shape{m, n});
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += x * bv[p * n + j];
    }
  }
  return make_node(std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const auto& gy = self.grad;
    if (na.requires_grad) {
      auto& ga = na.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += gy[i * n + j] * nb.value[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (nb.requires_grad) {
      auto& gb = nb.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double x = na.value[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += x * gy[i * n + j];
        }
      }
    }
  });
}

Var transpose(const Var& a) {
  const Shape& s = a.shape();
  if (s.size() != 2) throw ShapeError("transpose: expected a matrix");
  const std::size_t r = s[0], c = s[1];
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.value()[i * c + j];
  }
  return make_node(std::move(out), {a}, [r, c](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
    }
  });
}

Var row_softmax(const Var& x) {
  const Shape& s = x.shape();
  if (s.size() != 2) throw ShapeError("row_softmax: expected a matrix");
  const std::size_t rows = s[0], cols = s[1];
  Tensor out = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data().data() + r * cols;
    const double peak = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - peak);
      total += row[j];
    }
    for (std::size_t j = 0; j < cols; ++j) row[j] /= total;
  }
  Tensor probs = out;
  return make_node(std::move(out), {x}, [probs = std::move(probs), rows, cols](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += probs[r * cols + j] * self.grad[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        g[r * cols + j] += probs[r * cols + j] * (self.grad[r * cols + j] - dot);
      }
    }
  });
}

Tensor flip_width(const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("flip_width: expected [H,W,C]");
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) out[(y * w + x) * c + k] = image[(y * w + (w - 1 - x)) * c + k];
    }
  }
  return out;
}

}  // namespace partmatch
