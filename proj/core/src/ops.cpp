// Copyright 2026 The Pale Attention Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pale/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "pale/flop_trace.hpp"

namespace pale {

namespace {

template <typename T>
Tensor<T>* grad_slot(Node<T>& node, std::size_t parent) {
  auto& p = node.parents[parent];
  return p->requires_grad ? &p->ensure_grad() : nullptr;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

// C (m x n) += A (m x k) * B (k x n)
template <typename T>
void gemm_nn(Index m, Index n, Index k, const T* a, const T* b, T* c) {
  for (Index i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (Index p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      for (Index j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C (m x n) += A (m x k) * B^T, B is (n x k)
template <typename T>
void gemm_nt(Index m, Index n, Index k, const T* a, const T* b, T* c) {
  for (Index i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (Index j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = 0;
      for (Index p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C (m x n) += A^T * B, A is (k x m), B is (k x n)
template <typename T>
void gemm_tn(Index m, Index n, Index k, const T* a, const T* b, T* c) {
  for (Index p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (Index i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c + i * n;
      for (Index j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

Index last_dim(const Shape& s) { return s.back(); }

}  // namespace

// ---------------------------------------------------------------- matmul

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require(a.value().rank() == 2 && b.value().rank() == 2, "matmul: operands must be rank 2");
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner extents differ: " + shape_to_string(a.shape()) + " x " +
                             shape_to_string(b.shape()));
  Tensor<T> out({m, n});
  gemm_nn(m, n, k, a.value().raw(), b.value().raw(), out.raw());
  detail::record(OpKind::kMatmul, m * n * k);
  return make_result<T>(std::move(out), {a, b}, [m, n, k](Node<T>& node) {
    const T* dy = node.grad.raw();
    const auto& av = node.parents[0]->value;
    const auto& bv = node.parents[1]->value;
    if (auto* ga = grad_slot(node, 0)) gemm_nt(m, k, n, dy, bv.raw(), ga->raw());
    if (auto* gb = grad_slot(node, 1)) gemm_tn(k, n, m, av.raw(), dy, gb->raw());
  });
}

// ---------------------------------------------------------------- softmax

template <typename T>
Var<T> softmax_lastdim(const Var<T>& x, KeyMask mask) {
  const Index len = last_dim(x.shape());
  require(len >= 1, "softmax_lastdim: empty last axis");
  require(mask.empty() || static_cast<Index>(mask.size()) == len, "softmax_lastdim: mask length mismatch");
  if (!mask.empty()) {
    require(std::any_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }),
            "softmax_lastdim: every position is masked");
  }
  const Index rows = x.value().numel() / len;
  Tensor<T> out(x.shape());
  const T* in = x.value().raw();
  T* y = out.raw();
  for (Index r = 0; r < rows; ++r) {
    const T* xr = in + r * len;
    T* yr = y + r * len;
    T mx = -std::numeric_limits<T>::infinity();
    for (Index j = 0; j < len; ++j) {
      if (mask.empty() || mask[static_cast<std::size_t>(j)]) mx = std::max(mx, xr[j]);
    }
    T total = 0;
    for (Index j = 0; j < len; ++j) {
      if (mask.empty() || mask[static_cast<std::size_t>(j)]) {
        yr[j] = std::exp(xr[j] - mx);
        total += yr[j];
      }
    }
    const T inv = T{1} / total;
    for (Index j = 0; j < len; ++j) yr[j] *= inv;
  }
  detail::record(OpKind::kSoftmax, x.value().numel());
  return make_result<T>(std::move(out), {x}, [len, rows](Node<T>& node) {
    auto* gx = grad_slot(node, 0);
    if (!gx) return;
    const T* y = node.value.raw();
    const T* dy = node.grad.raw();
    T* dx = gx->raw();
    for (Index r = 0; r < rows; ++r) {
      T dot = 0;
      for (Index j = 0; j < len; ++j) dot += y[r * len + j] * dy[r * len + j];
      for (Index j = 0; j < len; ++j) dx[r * len + j] += y[r * len + j] * (dy[r * len + j] - dot);
    }
  });
}

// ---------------------------------------------------------------- layer norm

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps) {
  const Index c = last_dim(x.shape());
  require(c > 0, "layer_norm: channel extent is zero");
  require(gamma.value().numel() == c && beta.value().numel() == c, "layer_norm: affine size mismatch");
  require(eps >= 0.0, "layer_norm: negative eps");
  const Index rows = x.value().numel() / c;
  Tensor<T> out(x.shape());
  Tensor<T> xhat(x.shape());
  std::vector<T> rstd(static_cast<std::size_t>(rows));
  const T* in = x.value().raw();
  const T* g = gamma.value().raw();
  const T* b = beta.value().raw();
  for (Index r = 0; r < rows; ++r) {
    const T* xr = in + r * c;
    double mean = 0;
    for (Index j = 0; j < c; ++j) mean += xr[j];
    mean /= static_cast<double>(c);
    double var = 0;
    for (Index j = 0; j < c; ++j) {
      const double d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double denom = std::sqrt(var + eps);
    // Zero variance with eps = 0: every centered value is exactly 0.
    const double inv = denom > 0 ? 1.0 / denom : 0.0;
    rstd[static_cast<std::size_t>(r)] = static_cast<T>(inv);
    for (Index j = 0; j < c; ++j) {
      const T h = static_cast<T>((xr[j] - mean) * inv);
      xhat[r * c + j] = h;
      out[r * c + j] = h * g[j] + b[j];
    }
  }
  detail::record(OpKind::kNorm, x.value().numel());
  return make_result<T>(std::move(out), {x, gamma, beta},
                        [c, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& node) {
                          const T* dy = node.grad.raw();
                          const T* g = node.parents[1]->value.raw();
                          auto* gx = grad_slot(node, 0);
                          auto* gg = grad_slot(node, 1);
                          auto* gb = grad_slot(node, 2);
                          for (Index r = 0; r < rows; ++r) {
                            const T* dyr = dy + r * c;
                            const T* hr = xhat.raw() + r * c;
                            if (gg || gb) {
                              for (Index j = 0; j < c; ++j) {
                                if (gg) (*gg)[j] += dyr[j] * hr[j];
                                if (gb) (*gb)[j] += dyr[j];
                              }
                            }
                            if (!gx) continue;
                            T mean_d = 0, mean_dh = 0;
                            for (Index j = 0; j < c; ++j) {
                              const T d = dyr[j] * g[j];
                              mean_d += d;
                              mean_dh += d * hr[j];
                            }
                            mean_d /= static_cast<T>(c);
                            mean_dh /= static_cast<T>(c);
                            const T rs = rstd[static_cast<std::size_t>(r)];
                            T* dx = gx->raw() + r * c;
                            for (Index j = 0; j < c; ++j) dx[j] += rs * (dyr[j] * g[j] - mean_d - hr[j] * mean_dh);
                          }
                        });
}

// ---------------------------------------------------------------- conv2d

namespace {

struct ConvGeometry {
  Index batch, in_h, in_w, cin, kh, kw, cin_g, cout, cout_g, groups, out_h, out_w;
  Conv2dOptions opt;
  bool depthwise() const { return cin_g == 1 && cout == groups; }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& w, const Conv2dOptions& opt) {
  require(x.rank() == 4, "conv2d: input must be (b, h, w, c), got " + shape_to_string(x.shape()));
  require(w.rank() == 4, "conv2d: kernel must be (kh, kw, cin/groups, cout), got " + shape_to_string(w.shape()));
  require(opt.groups >= 1 && opt.stride_h >= 1 && opt.stride_w >= 1 && opt.pad_h >= 0 && opt.pad_w >= 0,
          "conv2d: invalid stride/pad/groups");
  ConvGeometry g{};
  g.opt = opt;
  g.batch = x.dim(0);
  g.in_h = x.dim(1);
  g.in_w = x.dim(2);
  g.cin = x.dim(3);
  g.kh = w.dim(0);
  g.kw = w.dim(1);
  g.cin_g = w.dim(2);
  g.cout = w.dim(3);
  g.groups = opt.groups;
  require(g.cin % g.groups == 0, "conv2d: input channels not divisible by groups");
  require(g.cout % g.groups == 0, "conv2d: output channels not divisible by groups");
  require(g.cin_g == g.cin / g.groups, "conv2d: kernel input-channel extent mismatch");
  g.cout_g = g.cout / g.groups;
  require(g.kh <= g.in_h + 2 * opt.pad_h && g.kw <= g.in_w + 2 * opt.pad_w,
          "conv2d: kernel larger than padded input");
  g.out_h = (g.in_h + 2 * opt.pad_h - g.kh) / opt.stride_h + 1;
  g.out_w = (g.in_w + 2 * opt.pad_w - g.kw) / opt.stride_w + 1;
  return g;
}

// Visits every (output position, kernel tap) pair with an in-bounds input.
template <typename F>
void for_each_tap(const ConvGeometry& g, F&& f) {
  for (Index b = 0; b < g.batch; ++b) {
    for (Index oy = 0; oy < g.out_h; ++oy) {
      for (Index ox = 0; ox < g.out_w; ++ox) {
        const Index out_off = ((b * g.out_h + oy) * g.out_w + ox) * g.cout;
        for (Index ky = 0; ky < g.kh; ++ky) {
          const Index iy = oy * g.opt.stride_h - g.opt.pad_h + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          for (Index kx = 0; kx < g.kw; ++kx) {
            const Index ix = ox * g.opt.stride_w - g.opt.pad_w + kx;
            if (ix < 0 || ix >= g.in_w) continue;
            const Index in_off = ((b * g.in_h + iy) * g.in_w + ix) * g.cin;
            const Index w_off = (ky * g.kw + kx) * g.cin_g * g.cout;
            f(in_off, w_off, out_off);
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const Conv2dOptions& options) {
  const ConvGeometry g = conv_geometry(x.value(), weight.value(), options);
  if (bias.defined()) require(bias.value().numel() == g.cout, "conv2d: bias size mismatch");
  Tensor<T> out({g.batch, g.out_h, g.out_w, g.cout});
  const T* in = x.value().raw();
  const T* wt = weight.value().raw();
  T* y = out.raw();
  if (g.depthwise()) {
    for_each_tap(g, [&](Index io, Index wo, Index oo) {
      for (Index c = 0; c < g.cout; ++c) y[oo + c] += in[io + c] * wt[wo + c];
    });
  } else {
    for_each_tap(g, [&](Index io, Index wo, Index oo) {
      for (Index grp = 0; grp < g.groups; ++grp) {
        for (Index ci = 0; ci < g.cin_g; ++ci) {
          const T xv = in[io + grp * g.cin_g + ci];
          const T* wrow = wt + wo + ci * g.cout + grp * g.cout_g;
          T* yrow = y + oo + grp * g.cout_g;
          for (Index co = 0; co < g.cout_g; ++co) yrow[co] += xv * wrow[co];
        }
      }
    });
  }
  if (bias.defined()) {
    const T* bv = bias.value().raw();
    const Index positions = g.batch * g.out_h * g.out_w;
    for (Index p = 0; p < positions; ++p) {
      for (Index c = 0; c < g.cout; ++c) y[p * g.cout + c] += bv[c];
    }
  }
  detail::record(OpKind::kConv, g.batch * g.out_h * g.out_w * g.kh * g.kw * g.cin_g * g.cout);

  std::vector<Var<T>> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  const bool has_bias = bias.defined();
  return make_result<T>(std::move(out), std::move(parents), [g, has_bias](Node<T>& node) {
    const T* dy = node.grad.raw();
    const T* in = node.parents[0]->value.raw();
    const T* wt = node.parents[1]->value.raw();
    auto* gx = grad_slot(node, 0);
    auto* gw = grad_slot(node, 1);
    T* dx = gx ? gx->raw() : nullptr;
    T* dw = gw ? gw->raw() : nullptr;
    if (dx || dw) {
      if (g.depthwise()) {
        for_each_tap(g, [&](Index io, Index wo, Index oo) {
          for (Index c = 0; c < g.cout; ++c) {
            if (dx) dx[io + c] += dy[oo + c] * wt[wo + c];
            if (dw) dw[wo + c] += dy[oo + c] * in[io + c];
          }
        });
      } else {
        for_each_tap(g, [&](Index io, Index wo, Index oo) {
          for (Index grp = 0; grp < g.groups; ++grp) {
            const T* dyrow = dy + oo + grp * g.cout_g;
            for (Index ci = 0; ci < g.cin_g; ++ci) {
              const Index xi = io + grp * g.cin_g + ci;
              const Index wrow = wo + ci * g.cout + grp * g.cout_g;
              if (dx) {
                T acc = 0;
                for (Index co = 0; co < g.cout_g; ++co) acc += dyrow[co] * wt[wrow + co];
                dx[xi] += acc;
              }
              if (dw) {
                const T xv = in[xi];
                for (Index co = 0; co < g.cout_g; ++co) dw[wrow + co] += xv * dyrow[co];
              }
            }
          }
        });
      }
    }
    if (has_bias) {
      if (auto* gb = grad_slot(node, 2)) {
        const Index positions = g.batch * g.out_h * g.out_w;
        for (Index p = 0; p < positions; ++p) {
          for (Index c = 0; c < g.cout; ++c) (*gb)[c] += dy[p * g.cout + c];
        }
      }
    }
  });
}

// ---------------------------------------------------------------- linear

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  require(weight.value().rank() == 2, "linear: weight must be (cin, cout)");
  const Index cin = weight.dim(0), cout = weight.dim(1);
  require(last_dim(x.shape()) == cin, "linear: input channels " + std::to_string(last_dim(x.shape())) +
                                          " do not match weight " + shape_to_string(weight.shape()));
  if (bias.defined()) require(bias.value().numel() == cout, "linear: bias size mismatch");
  const Index m = x.value().numel() / cin;
  Shape out_shape = x.shape();
  out_shape.back() = cout;
  Tensor<T> out(out_shape);
  gemm_nn(m, cout, cin, x.value().raw(), weight.value().raw(), out.raw());
  if (bias.defined()) {
    const T* bv = bias.value().raw();
    for (Index i = 0; i < m; ++i) {
      for (Index j = 0; j < cout; ++j) out[i * cout + j] += bv[j];
    }
  }
  detail::record(OpKind::kMatmul, m * cin * cout);
  std::vector<Var<T>> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  const bool has_bias = bias.defined();
  return make_result<T>(std::move(out), std::move(parents), [m, cin, cout, has_bias](Node<T>& node) {
    const T* dy = node.grad.raw();
    if (auto* gx = grad_slot(node, 0)) gemm_nt(m, cin, cout, dy, node.parents[1]->value.raw(), gx->raw());
    if (auto* gw = grad_slot(node, 1)) gemm_tn(cin, cout, m, node.parents[0]->value.raw(), dy, gw->raw());
    if (has_bias) {
      if (auto* gb = grad_slot(node, 2)) {
        for (Index i = 0; i < m; ++i) {
          for (Index j = 0; j < cout; ++j) (*gb)[j] += dy[i * cout + j];
        }
      }
    }
  });
}

// ---------------------------------------------------------------- elementwise

template <typename T>
Var<T> gelu(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* in = x.value().raw();
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  for (Index i = 0; i < out.numel(); ++i) {
    const double v = in[i];
    out[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
  }
  detail::record(OpKind::kElementwise, out.numel());
  return make_result<T>(std::move(out), {x}, [](Node<T>& node) {
    auto* gx = grad_slot(node, 0);
    if (!gx) return;
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    const T* in = node.parents[0]->value.raw();
    for (Index i = 0; i < node.grad.numel(); ++i) {
      const double v = in[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      (*gx)[i] += node.grad[i] * static_cast<T>(cdf + v * pdf);
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                      shape_to_string(b.shape()));
  Tensor<T> out(a.shape());
  for (Index i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  detail::record(OpKind::kElementwise, out.numel());
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& node) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto* g = grad_slot(node, p)) {
        for (Index i = 0; i < g->numel(); ++i) (*g)[i] += node.grad[i];
      }
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor<T> out(a.shape());
  for (Index i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  detail::record(OpKind::kElementwise, out.numel());
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& node) {
    const auto& av = node.parents[0]->value;
    const auto& bv = node.parents[1]->value;
    if (auto* ga = grad_slot(node, 0)) {
      for (Index i = 0; i < ga->numel(); ++i) (*ga)[i] += node.grad[i] * bv[i];
    }
    if (auto* gb = grad_slot(node, 1)) {
      for (Index i = 0; i < gb->numel(); ++i) (*gb)[i] += node.grad[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  Tensor<T> out(x.shape());
  for (Index i = 0; i < out.numel(); ++i) out[i] = x.value()[i] * factor;
  detail::record(OpKind::kElementwise, out.numel());
  return make_result<T>(std::move(out), {x}, [factor](Node<T>& node) {
    if (auto* g = grad_slot(node, 0)) {
      for (Index i = 0; i < g->numel(); ++i) (*g)[i] += node.grad[i] * factor;
    }
  });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  return mul(x, x);
}

template <typename T>
Var<T> mean_pool_spatial(const Var<T>& x) {
  require(x.value().rank() == 4, "mean_pool_spatial: input must be (b, h, w, c)");
  const Index b = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  require(hw > 0, "mean_pool_spatial: empty spatial extent");
  Tensor<T> out({b, 1, 1, c});
  const T* in = x.value().raw();
  for (Index n = 0; n < b; ++n) {
    for (Index p = 0; p < hw; ++p) {
      for (Index ch = 0; ch < c; ++ch) out[n * c + ch] += in[(n * hw + p) * c + ch];
    }
    for (Index ch = 0; ch < c; ++ch) out[n * c + ch] /= static_cast<T>(hw);
  }
  detail::record(OpKind::kElementwise, x.value().numel());
  return make_result<T>(std::move(out), {x}, [b, hw, c](Node<T>& node) {
    auto* gx = grad_slot(node, 0);
    if (!gx) return;
    const T inv = T{1} / static_cast<T>(hw);
    for (Index n = 0; n < b; ++n) {
      for (Index p = 0; p < hw; ++p) {
        for (Index ch = 0; ch < c; ++ch) (*gx)[(n * hw + p) * c + ch] += node.grad[n * c + ch] * inv;
      }
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return make_result<T>(std::move(out), {x}, [](Node<T>& node) {
    if (auto* g = grad_slot(node, 0)) {
      for (Index i = 0; i < g->numel(); ++i) (*g)[i] += node.grad[i];
    }
  });
}

// ---------------------------------------------------------------- channels

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  Shape lead = parts[0].shape();
  lead.pop_back();
  std::vector<Index> widths;
  Index total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    widths.push_back(s.back());
    s.pop_back();
    require(s == lead, "concat_channels: leading extents differ");
    total += widths.back();
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor<T> out(out_shape);
  const Index rows = out.numel() / std::max<Index>(total, 1);
  Index offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const T* src = parts[k].value().raw();
    const Index wk = widths[k];
    for (Index r = 0; r < rows; ++r) std::copy_n(src + r * wk, wk, out.raw() + r * total + offset);
    offset += wk;
  }
  std::vector<Var<T>> parents(parts.begin(), parts.end());
  return make_result<T>(std::move(out), std::move(parents), [widths, rows, total](Node<T>& node) {
    Index offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (auto* g = grad_slot(node, k)) {
        for (Index r = 0; r < rows; ++r) {
          for (Index j = 0; j < widths[k]; ++j) (*g)[r * widths[k] + j] += node.grad[r * total + offset + j];
        }
      }
      offset += widths[k];
    }
  });
}

template <typename T>
std::vector<Var<T>> split_channels(const Var<T>& x, std::span<const Index> widths) {
  const Index total = last_dim(x.shape());
  require(std::accumulate(widths.begin(), widths.end(), Index{0}) == total,
          "split_channels: widths do not sum to the channel extent");
  const Index rows = x.value().numel() / std::max<Index>(total, 1);
  std::vector<Var<T>> out;
  Index offset = 0;
  for (Index wk : widths) {
    require(wk >= 0, "split_channels: negative width");
    Shape s = x.shape();
    s.back() = wk;
    Tensor<T> part(s);
    for (Index r = 0; r < rows; ++r) std::copy_n(x.value().raw() + r * total + offset, wk, part.raw() + r * wk);
    out.push_back(make_result<T>(std::move(part), {x}, [rows, total, offset, wk](Node<T>& node) {
      if (auto* g = grad_slot(node, 0)) {
        for (Index r = 0; r < rows; ++r) {
          for (Index j = 0; j < wk; ++j) (*g)[r * total + offset + j] += node.grad[r * wk + j];
        }
      }
    }));
    offset += wk;
  }
  return out;
}

template <typename T>
std::pair<Var<T>, Var<T>> split_channels_half(const Var<T>& x) {
  const Index c = last_dim(x.shape());
  require(c % 2 == 0, "split_channels_half: odd channel count " + std::to_string(c));
  const Index widths[2] = {c / 2, c / 2};
  auto parts = split_channels<T>(x, widths);
  return {parts[0], parts[1]};
}

// ---------------------------------------------------------------- spatial

template <typename T>
Var<T> pad_spatial(const Var<T>& x, Index pad_bottom, Index pad_right) {
  require(x.value().rank() == 4, "pad_spatial: input must be (b, h, w, c)");
  require(pad_bottom >= 0 && pad_right >= 0, "pad_spatial: negative padding");
  const Index b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const Index H = h + pad_bottom, W = w + pad_right;
  Tensor<T> out({b, H, W, c});
  for (Index n = 0; n < b; ++n) {
    for (Index i = 0; i < h; ++i) {
      std::copy_n(x.value().raw() + ((n * h + i) * w) * c, w * c, out.raw() + ((n * H + i) * W) * c);
    }
  }
  return make_result<T>(std::move(out), {x}, [b, h, w, c, H, W](Node<T>& node) {
    auto* g = grad_slot(node, 0);
    if (!g) return;
    for (Index n = 0; n < b; ++n) {
      for (Index i = 0; i < h; ++i) {
        const T* src = node.grad.raw() + ((n * H + i) * W) * c;
        T* dst = g->raw() + ((n * h + i) * w) * c;
        for (Index j = 0; j < w * c; ++j) dst[j] += src[j];
      }
    }
  });
}

template <typename T>
Var<T> crop_spatial(const Var<T>& x, Index h, Index w) {
  require(x.value().rank() == 4, "crop_spatial: input must be (b, h, w, c)");
  const Index b = x.dim(0), H = x.dim(1), W = x.dim(2), c = x.dim(3);
  require(h >= 0 && w >= 0 && h <= H && w <= W, "crop_spatial: window exceeds input");
  Tensor<T> out({b, h, w, c});
  for (Index n = 0; n < b; ++n) {
    for (Index i = 0; i < h; ++i) {
      std::copy_n(x.value().raw() + ((n * H + i) * W) * c, w * c, out.raw() + ((n * h + i) * w) * c);
    }
  }
  return make_result<T>(std::move(out), {x}, [b, h, w, c, H, W](Node<T>& node) {
    auto* g = grad_slot(node, 0);
    if (!g) return;
    for (Index n = 0; n < b; ++n) {
      for (Index i = 0; i < h; ++i) {
        const T* src = node.grad.raw() + ((n * h + i) * w) * c;
        T* dst = g->raw() + ((n * H + i) * W) * c;
        for (Index j = 0; j < w * c; ++j) dst[j] += src[j];
      }
    }
  });
}

// ---------------------------------------------------------------- gather / scatter

template <typename T>
Var<T> gather_tokens(const Var<T>& x, std::span<const Index> token_index, Index groups) {
  require(x.value().rank() == 4, "gather_tokens: input must be (b, h, w, c)");
  require(groups >= 1 && static_cast<Index>(token_index.size()) % groups == 0,
          "gather_tokens: index count not divisible by group count");
  const Index b = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  const Index total = static_cast<Index>(token_index.size());
  for (Index t : token_index) require(t >= 0 && t < hw, "gather_tokens: token index out of range");
  Tensor<T> out({b, groups, total / groups, c});
  for (Index n = 0; n < b; ++n) {
    for (Index j = 0; j < total; ++j) {
      std::copy_n(x.value().raw() + (n * hw + token_index[static_cast<std::size_t>(j)]) * c, c,
                  out.raw() + (n * total + j) * c);
    }
  }
  std::vector<Index> idx(token_index.begin(), token_index.end());
  return make_result<T>(std::move(out), {x}, [b, hw, c, idx = std::move(idx)](Node<T>& node) {
    auto* g = grad_slot(node, 0);
    if (!g) return;
    const Index total = static_cast<Index>(idx.size());
    for (Index n = 0; n < b; ++n) {
      for (Index j = 0; j < total; ++j) {
        const T* src = node.grad.raw() + (n * total + j) * c;
        T* dst = g->raw() + (n * hw + idx[static_cast<std::size_t>(j)]) * c;
        for (Index ch = 0; ch < c; ++ch) dst[ch] += src[ch];
      }
    }
  });
}

template <typename T>
Var<T> scatter_tokens(const Var<T>& y, std::span<const Index> token_index, Index h, Index w) {
  require(y.value().rank() == 4, "scatter_tokens: input must be (b, groups, n, c)");
  const Index b = y.dim(0), c = y.dim(3), hw = h * w;
  const Index total = y.dim(1) * y.dim(2);
  require(total == hw && static_cast<Index>(token_index.size()) == hw,
          "scatter_tokens: index list must cover every token exactly once");
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(hw), 0);
  for (Index t : token_index) {
    require(t >= 0 && t < hw, "scatter_tokens: token index out of range");
    require(!seen[static_cast<std::size_t>(t)], "scatter_tokens: repeated token index");
    seen[static_cast<std::size_t>(t)] = 1;
  }
  Tensor<T> out({b, h, w, c});
  for (Index n = 0; n < b; ++n) {
    for (Index j = 0; j < total; ++j) {
      std::copy_n(y.value().raw() + (n * total + j) * c, c,
                  out.raw() + (n * hw + token_index[static_cast<std::size_t>(j)]) * c);
    }
  }
  std::vector<Index> idx(token_index.begin(), token_index.end());
  return make_result<T>(std::move(out), {y}, [b, hw, c, idx = std::move(idx)](Node<T>& node) {
    auto* g = grad_slot(node, 0);
    if (!g) return;
    const Index total = static_cast<Index>(idx.size());
    for (Index n = 0; n < b; ++n) {
      for (Index j = 0; j < total; ++j) {
        const T* src = node.grad.raw() + (n * hw + idx[static_cast<std::size_t>(j)]) * c;
        T* dst = g->raw() + (n * total + j) * c;
        for (Index ch = 0; ch < c; ++ch) dst[ch] += src[ch];
      }
    }
  });
}

// ---------------------------------------------------------------- attention

template <typename T>
Var<T> grouped_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads, KeyMask key_mask) {
  require(q.value().rank() == 4 && k.value().rank() == 4 && v.value().rank() == 4,
          "grouped_attention: operands must be (b, groups, n, d)");
  const Index b = q.dim(0), g = q.dim(1), nq = q.dim(2), d = q.dim(3);
  const Index nk = k.dim(2);
  require(k.dim(0) == b && k.dim(1) == g && k.dim(3) == d, "grouped_attention: key shape mismatch");
  require(v.shape() == k.shape(), "grouped_attention: value shape must equal key shape");
  require(heads >= 1 && d % heads == 0, "grouped_attention: width " + std::to_string(d) +
                                            " not divisible by " + std::to_string(heads) + " heads");
  require(nk >= 1, "grouped_attention: empty key set");
  require(key_mask.empty() || static_cast<Index>(key_mask.size()) == g * nk,
          "grouped_attention: key mask length mismatch");
  if (!key_mask.empty()) {
    for (Index gi = 0; gi < g; ++gi) {
      const auto* m = key_mask.data() + gi * nk;
      require(std::any_of(m, m + nk, [](std::uint8_t x) { return x != 0; }),
              "grouped_attention: group " + std::to_string(gi) + " has no valid key");
    }
  }
  const Index dh = d / heads;
  const T scale_factor = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  const bool keep = grad_mode_enabled() && (q.requires_grad() || k.requires_grad() || v.requires_grad());

  Tensor<T> out({b, g, nq, d});
  std::vector<T> probs;
  if (keep) probs.resize(static_cast<std::size_t>(b * g * heads * nq * nk));
  std::vector<T> row(static_cast<std::size_t>(nk));
  const T* Q = q.value().raw();
  const T* K = k.value().raw();
  const T* V = v.value().raw();
  T* O = out.raw();

  for (Index n = 0; n < b; ++n) {
    for (Index gi = 0; gi < g; ++gi) {
      const std::uint8_t* mask = key_mask.empty() ? nullptr : key_mask.data() + gi * nk;
      const T* qg = Q + (n * g + gi) * nq * d;
      const T* kg = K + (n * g + gi) * nk * d;
      const T* vg = V + (n * g + gi) * nk * d;
      T* og = O + (n * g + gi) * nq * d;
      for (Index hd = 0; hd < heads; ++hd) {
        const Index off = hd * dh;
        for (Index i = 0; i < nq; ++i) {
          const T* qi = qg + i * d + off;
          T mx = -std::numeric_limits<T>::infinity();
          for (Index j = 0; j < nk; ++j) {
            if (mask && !mask[j]) {
              row[static_cast<std::size_t>(j)] = 0;
              continue;
            }
            const T* kj = kg + j * d + off;
            T acc = 0;
            for (Index t = 0; t < dh; ++t) acc += qi[t] * kj[t];
            acc *= scale_factor;
            row[static_cast<std::size_t>(j)] = acc;
            mx = std::max(mx, acc);
          }
          T total = 0;
          for (Index j = 0; j < nk; ++j) {
            if (mask && !mask[j]) continue;
            const T e = std::exp(row[static_cast<std::size_t>(j)] - mx);
            row[static_cast<std::size_t>(j)] = e;
            total += e;
          }
          const T inv = T{1} / total;
          T* oi = og + i * d + off;
          for (Index j = 0; j < nk; ++j) {
            if (mask && !mask[j]) continue;
            const T p = row[static_cast<std::size_t>(j)] * inv;
            row[static_cast<std::size_t>(j)] = p;
            const T* vj = vg + j * d + off;
            for (Index t = 0; t < dh; ++t) oi[t] += p * vj[t];
          }
          if (keep) {
            std::copy(row.begin(), row.end(), probs.begin() + (((n * g + gi) * heads + hd) * nq + i) * nk);
          }
        }
      }
    }
  }
  detail::record(OpKind::kAttention, 2 * b * g * nq * nk * d);
  detail::record(OpKind::kSoftmax, b * g * heads * nq * nk);

  return make_result<T>(
      std::move(out), {q, k, v},
      [b, g, nq, nk, d, heads, dh, scale_factor, probs = std::move(probs)](Node<T>& node) {
        const T* Q = node.parents[0]->value.raw();
        const T* K = node.parents[1]->value.raw();
        const T* V = node.parents[2]->value.raw();
        auto* gq = grad_slot(node, 0);
        auto* gk = grad_slot(node, 1);
        auto* gv = grad_slot(node, 2);
        const T* dO = node.grad.raw();
        std::vector<T> dp(static_cast<std::size_t>(nk));
        for (Index n = 0; n < b; ++n) {
          for (Index gi = 0; gi < g; ++gi) {
            const Index base_q = (n * g + gi) * nq * d;
            const Index base_k = (n * g + gi) * nk * d;
            for (Index hd = 0; hd < heads; ++hd) {
              const Index off = hd * dh;
              for (Index i = 0; i < nq; ++i) {
                const T* p = probs.data() + (((n * g + gi) * heads + hd) * nq + i) * nk;
                const T* doi = dO + base_q + i * d + off;
                T dot = 0;
                for (Index j = 0; j < nk; ++j) {
                  const T* vj = V + base_k + j * d + off;
                  T acc = 0;
                  for (Index t = 0; t < dh; ++t) acc += doi[t] * vj[t];
                  dp[static_cast<std::size_t>(j)] = acc;
                  dot += p[j] * acc;
                  if (gv && p[j] != T{0}) {
                    T* dvj = gv->raw() + base_k + j * d + off;
                    for (Index t = 0; t < dh; ++t) dvj[t] += p[j] * doi[t];
                  }
                }
                const T* qi = Q + base_q + i * d + off;
                T* dqi = gq ? gq->raw() + base_q + i * d + off : nullptr;
                for (Index j = 0; j < nk; ++j) {
                  if (p[j] == T{0}) continue;
                  const T ds = p[j] * (dp[static_cast<std::size_t>(j)] - dot) * scale_factor;
                  const T* kj = K + base_k + j * d + off;
                  if (dqi) {
                    for (Index t = 0; t < dh; ++t) dqi[t] += ds * kj[t];
                  }
                  if (gk) {
                    T* dkj = gk->raw() + base_k + j * d + off;
                    for (Index t = 0; t < dh; ++t) dkj[t] += ds * qi[t];
                  }
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------- losses

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels) {
  require(logits.value().rank() == 2, "cross_entropy: logits must be (n, classes)");
  const Index n = logits.dim(0), k = logits.dim(1);
  require(static_cast<Index>(labels.size()) == n, "cross_entropy: label count mismatch");
  require(n > 0 && k > 0, "cross_entropy: empty logits");
  Tensor<T> probs({n, k});
  double loss = 0;
  for (Index i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    require(label >= 0 && label < k, "cross_entropy: label out of range");
    const T* z = logits.value().raw() + i * k;
    const T mx = *std::max_element(z, z + k);
    double total = 0;
    for (Index j = 0; j < k; ++j) total += std::exp(static_cast<double>(z[j] - mx));
    for (Index j = 0; j < k; ++j) probs[i * k + j] = static_cast<T>(std::exp(static_cast<double>(z[j] - mx)) / total);
    loss += std::log(total) + mx - z[label];
  }
  Tensor<T> out({1}, static_cast<T>(loss / static_cast<double>(n)));
  std::vector<int> lab(labels.begin(), labels.end());
  return make_result<T>(std::move(out), {logits}, [n, k, probs = std::move(probs), lab = std::move(lab)](Node<T>& node) {
    auto* g = grad_slot(node, 0);
    if (!g) return;
    const T s = node.grad[0] / static_cast<T>(n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < k; ++j) {
        const T onehot = j == lab[static_cast<std::size_t>(i)] ? T{1} : T{0};
        (*g)[i * k + j] += s * (probs[i * k + j] - onehot);
      }
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T total = 0;
  for (Index i = 0; i < x.value().numel(); ++i) total += x.value()[i];
  return make_result<T>(Tensor<T>({1}, total), {x}, [](Node<T>& node) {
    if (auto* g = grad_slot(node, 0)) {
      for (Index i = 0; i < g->numel(); ++i) (*g)[i] += node.grad[0];
    }
  });
}

template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights) {
  require(weights.numel() == x.value().numel(), "weighted_sum: weight count mismatch");
  T total = 0;
  for (Index i = 0; i < x.value().numel(); ++i) total += x.value()[i] * weights[i];
  return make_result<T>(Tensor<T>({1}, total), {x}, [weights](Node<T>& node) {
    if (auto* g = grad_slot(node, 0)) {
      for (Index i = 0; i < g->numel(); ++i) (*g)[i] += node.grad[0] * weights[i];
    }
  });
}

// ---------------------------------------------------------------- instantiation

#define PALE_INSTANTIATE_OPS(T)                                                                       \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                               \
  template Var<T> softmax_lastdim(const Var<T>&, KeyMask);                                            \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, double);                    \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, const Conv2dOptions&);          \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                                \
  template Var<T> gelu(const Var<T>&);                                                                \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                  \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                  \
  template Var<T> scale(const Var<T>&, T);                                                            \
  template Var<T> square(const Var<T>&);                                                              \
  template Var<T> mean_pool_spatial(const Var<T>&);                                                   \
  template Var<T> reshape(const Var<T>&, Shape);                                                      \
  template Var<T> concat_channels(std::span<const Var<T>>);                                           \
  template std::vector<Var<T>> split_channels(const Var<T>&, std::span<const Index>);                 \
  template std::pair<Var<T>, Var<T>> split_channels_half(const Var<T>&);                              \
  template Var<T> pad_spatial(const Var<T>&, Index, Index);                                           \
  template Var<T> crop_spatial(const Var<T>&, Index, Index);                                          \
  template Var<T> gather_tokens(const Var<T>&, std::span<const Index>, Index);                        \
  template Var<T> scatter_tokens(const Var<T>&, std::span<const Index>, Index, Index);                \
  template Var<T> grouped_attention(const Var<T>&, const Var<T>&, const Var<T>&, int, KeyMask);       \
  template Var<T> cross_entropy(const Var<T>&, std::span<const int>);                                 \
  template Var<T> sum(const Var<T>&);                                                                 \
  template Var<T> weighted_sum(const Var<T>&, const Tensor<T>&);

PALE_INSTANTIATE_OPS(float)
PALE_INSTANTIATE_OPS(double)

#undef PALE_INSTANTIATE_OPS

}  // namespace pale
