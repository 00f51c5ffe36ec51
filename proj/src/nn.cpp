// Copyright 2026 The xfnet Authors. All Rights Reserved.
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

#include "xfnet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gemm.hpp"

namespace xfnet {

std::size_t Padding::resolve(std::size_t kernel) const {
  switch (kind) {
    case Kind::same:
      if (kernel % 2 == 0) {
        throw ShapeError("same padding needs an odd kernel, got extent " + std::to_string(kernel));
      }
      return (kernel - 1) / 2;
    case Kind::valid:
      return 0;
    case Kind::explicit_amount:
      return amount;
  }
  return 0;
}

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t pad, const char* what) {
  if (stride == 0) throw ShapeError(std::string(what) + ": stride must be positive");
  if (in + 2 * pad < kernel) {
    throw ShapeError(std::string(what) + ": input extent " + std::to_string(in) +
                     " (padding " + std::to_string(pad) + ") is smaller than kernel " +
                     std::to_string(kernel));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

namespace {

struct ConvGeom {
  std::size_t batch, in_ch, height, width;
  std::size_t out_ch, kh, kw;
  std::size_t stride, pad_h, pad_w;
  std::size_t out_h, out_w;
  std::size_t groups;
  std::size_t in_per_group() const { return in_ch / groups; }
  std::size_t out_per_group() const { return out_ch / groups; }
  bool is_pointwise() const {
    return kh == 1 && kw == 1 && stride == 1 && pad_h == 0 && pad_w == 0 && groups == 1;
  }
};

// Range of output columns whose input column ox*stride + kx - pad lies in
// [0, width).
void column_range(const ConvGeom& g, std::size_t kx, std::size_t& lo, std::size_t& hi) {
  const long s = static_cast<long>(g.stride);
  const long off = static_cast<long>(kx) - static_cast<long>(g.pad_w);
  long first = 0;
  if (off < 0) first = (-off + s - 1) / s;
  long last = (static_cast<long>(g.width) - 1 - off);
  if (last < 0) {
    lo = hi = 0;
    return;
  }
  last = last / s + 1;
  lo = static_cast<std::size_t>(std::min<long>(first, static_cast<long>(g.out_w)));
  hi = static_cast<std::size_t>(std::clamp<long>(last, static_cast<long>(lo),
                                                 static_cast<long>(g.out_w)));
}

// Visits every (output position, input position) pair of one kernel tap and
// one channel pair.
template <typename F>
void for_each_tap(const ConvGeom& g, std::size_t ky, std::size_t kx, F&& fn) {
  std::size_t lo, hi;
  column_range(g, kx, lo, hi);
  if (lo >= hi) return;
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad_h);
    if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
    const std::size_t in_row = static_cast<std::size_t>(iy) * g.width;
    const std::size_t out_row = oy * g.out_w;
    // ix = ox*stride + kx - pad_w, non-negative for ox >= lo
    const std::size_t ix0 = lo * g.stride + kx - g.pad_w;
    fn(out_row + lo, in_row + ix0, hi - lo);
  }
}

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& k, const ConvGeom& g) {
  Tensor<T> out(Shape{g.batch, g.out_ch, g.out_h, g.out_w});
  const T* xv = x.data().data();
  const T* kv = k.data().data();
  T* ov = out.data().data();
  const std::size_t in_plane = g.height * g.width;
  const std::size_t out_plane = g.out_h * g.out_w;
  if (g.is_pointwise()) {
    for (std::size_t b = 0; b < g.batch; ++b) {
      detail::gemm_nn(kv, xv + b * g.in_ch * in_plane, ov + b * g.out_ch * out_plane, g.out_ch,
                      g.in_ch, in_plane);
    }
    return out;
  }
  const std::size_t ipg = g.in_per_group(), opg = g.out_per_group();
  const std::size_t s = g.stride;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t oc = 0; oc < g.out_ch; ++oc) {
      T* oplane = ov + (b * g.out_ch + oc) * out_plane;
      const std::size_t group = oc / opg;
      for (std::size_t icg = 0; icg < ipg; ++icg) {
        const std::size_t ic = group * ipg + icg;
        const T* iplane = xv + (b * g.in_ch + ic) * in_plane;
        const T* kern = kv + (oc * ipg + icg) * g.kh * g.kw;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const T w = kern[ky * g.kw + kx];
            for_each_tap(g, ky, kx, [&](std::size_t o, std::size_t i, std::size_t n) {
              T* dst = oplane + o;
              const T* src = iplane + i;
              if (s == 1) {
                for (std::size_t t = 0; t < n; ++t) dst[t] += w * src[t];
              } else {
                for (std::size_t t = 0; t < n; ++t) dst[t] += w * src[t * s];
              }
            });
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
void conv_backward(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& grad,
                   const ConvGeom& g, Tensor<T>* dx, Tensor<T>* dk) {
  const T* xv = x.data().data();
  const T* kv = k.data().data();
  const T* gv = grad.data().data();
  const std::size_t in_plane = g.height * g.width;
  const std::size_t out_plane = g.out_h * g.out_w;
  if (g.is_pointwise()) {
    for (std::size_t b = 0; b < g.batch; ++b) {
      const T* gb = gv + b * g.out_ch * out_plane;
      if (dx) {
        detail::gemm_tn(kv, gb, dx->data().data() + b * g.in_ch * in_plane, g.in_ch, g.out_ch,
                        in_plane);
      }
      if (dk) {
        detail::gemm_nt(gb, xv + b * g.in_ch * in_plane, dk->data().data(), g.out_ch, in_plane,
                        g.in_ch);
      }
    }
    return;
  }
  const std::size_t ipg = g.in_per_group(), opg = g.out_per_group();
  const std::size_t s = g.stride;
  T* dxv = dx ? dx->data().data() : nullptr;
  T* dkv = dk ? dk->data().data() : nullptr;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t oc = 0; oc < g.out_ch; ++oc) {
      const T* gplane = gv + (b * g.out_ch + oc) * out_plane;
      const std::size_t group = oc / opg;
      for (std::size_t icg = 0; icg < ipg; ++icg) {
        const std::size_t ic = group * ipg + icg;
        const T* iplane = xv + (b * g.in_ch + ic) * in_plane;
        T* diplane = dxv ? dxv + (b * g.in_ch + ic) * in_plane : nullptr;
        const std::size_t kbase = (oc * ipg + icg) * g.kh * g.kw;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const T w = kv[kbase + ky * g.kw + kx];
            T acc{0};
            for_each_tap(g, ky, kx, [&](std::size_t o, std::size_t i, std::size_t n) {
              const T* gs = gplane + o;
              if (diplane) {
                T* d = diplane + i;
                for (std::size_t t = 0; t < n; ++t) d[t * s] += w * gs[t];
              }
              if (dkv) {
                const T* src = iplane + i;
                for (std::size_t t = 0; t < n; ++t) acc += gs[t] * src[t * s];
              }
            });
            if (dkv) dkv[kbase + ky * g.kw + kx] += acc;
          }
        }
      }
    }
  }
}

template <typename T>
Var<T> grouped_conv(Var<T> x, Var<T> kernel, std::size_t stride, Padding padding,
                    std::size_t groups, const char* what) {
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  if (xs.rank() != 4 || ks.rank() != 4) {
    throw ShapeError(std::string(what) + ": expected rank-4 input and kernel, got " + xs.str() +
                     " and " + ks.str());
  }
  ConvGeom g{};
  g.batch = xs[0];
  g.in_ch = xs[1];
  g.height = xs[2];
  g.width = xs[3];
  g.out_ch = ks[0];
  g.kh = ks[2];
  g.kw = ks[3];
  g.groups = groups;
  if (g.in_ch % groups != 0 || g.out_ch % groups != 0 || ks[1] != g.in_ch / groups) {
    throw ShapeError(std::string(what) + ": channel mismatch between input " + xs.str() +
                     " and kernel " + ks.str());
  }
  g.stride = stride;
  g.pad_h = padding.resolve(g.kh);
  g.pad_w = padding.resolve(g.kw);
  g.out_h = conv_output_size(g.height, g.kh, stride, g.pad_h, what);
  g.out_w = conv_output_size(g.width, g.kw, stride, g.pad_w, what);

  Tensor<T> out = conv_forward(x.value(), kernel.value(), g);
  return x.graph().record(what, std::move(out), {x, kernel}, [g](BackwardContext<T>& ctx) {
    std::optional<Tensor<T>> dx, dk;
    if (ctx.needs(0)) dx.emplace(ctx.input(0).shape());
    if (ctx.needs(1)) dk.emplace(ctx.input(1).shape());
    conv_backward(ctx.input(0), ctx.input(1), ctx.grad(), g, dx ? &*dx : nullptr,
                  dk ? &*dk : nullptr);
    if (dx) ctx.accumulate(0, std::move(*dx));
    if (dk) ctx.accumulate(1, std::move(*dk));
  });
}

template <typename T>
Var<T> add_channel_bias(Var<T> x, Var<T> bias) {
  const Shape& xs = x.shape();
  if (bias.shape() != Shape{xs[1]}) {
    throw ShapeError("conv2d bias: expected shape " + Shape{xs[1]}.str() + ", got " +
                     bias.shape().str());
  }
  const std::size_t batch = xs[0], ch = xs[1], plane = xs[2] * xs[3];
  Tensor<T> out = x.value();
  auto o = out.data();
  auto bv = bias.value().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t i = 0; i < plane; ++i) o[(b * ch + c) * plane + i] += bv[c];
  return x.graph().record("bias_add", std::move(out), {x, bias},
                          [batch, ch, plane](BackwardContext<T>& ctx) {
                            ctx.accumulate(0, ctx.grad());
                            if (!ctx.needs(1)) return;
                            Tensor<T> db(Shape{ch});
                            auto g = ctx.grad().data();
                            for (std::size_t b = 0; b < batch; ++b)
                              for (std::size_t c = 0; c < ch; ++c)
                                for (std::size_t i = 0; i < plane; ++i)
                                  db[c] += g[(b * ch + c) * plane + i];
                            ctx.accumulate(1, std::move(db));
                          });
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> x, const Conv2dParams<T>& p) {
  Var<T> out = grouped_conv(x, p.kernel, p.stride, p.padding, 1, "conv2d");
  if (p.bias) out = add_channel_bias(out, *p.bias);
  return out;
}

template <typename T>
Var<T> depthwise_conv2d(Var<T> x, Var<T> kernel, std::size_t stride, Padding padding) {
  if (x.shape().rank() != 4 || kernel.shape().rank() != 4 || kernel.shape()[0] != x.shape()[1] ||
      kernel.shape()[1] != 1) {
    throw ShapeError("depthwise_conv2d: channel mismatch between input " + x.shape().str() +
                     " and kernel " + kernel.shape().str());
  }
  return grouped_conv(x, kernel, stride, padding, x.shape()[1], "depthwise_conv2d");
}

template <typename T>
Var<T> pointwise_conv2d(Var<T> x, Var<T> kernel) {
  if (kernel.shape().rank() != 4 || kernel.shape()[2] != 1 || kernel.shape()[3] != 1) {
    throw ShapeError("pointwise_conv2d: kernel must be 1x1, got " + kernel.shape().str());
  }
  return grouped_conv(x, kernel, 1, Padding::valid(), 1, "pointwise_conv2d");
}

template <typename T>
Var<T> separable_conv2d(Var<T> x, Var<T> depthwise_kernel, Var<T> pointwise_kernel,
                        std::size_t stride, Padding padding) {
  return pointwise_conv2d(depthwise_conv2d(x, depthwise_kernel, stride, padding),
                          pointwise_kernel);
}

template <typename T>
BatchNormState<T> BatchNormState<T>::fresh(std::size_t channels) {
  BatchNormState s{Tensor<T>(Shape{channels}, T{0}), Tensor<T>(Shape{channels}, T{1})};
  return s;
}

template <typename T>
BatchNormResult<T> batch_norm(Var<T> x, Var<T> scale, Var<T> shift,
                              const BatchNormState<T>& state, Mode mode) {
  const Shape& xs = x.shape();
  require_rank(xs, 4, "batch_norm");
  const std::size_t batch = xs[0], ch = xs[1], plane = xs[2] * xs[3];
  const Shape cs{ch};
  if (scale.shape() != cs || shift.shape() != cs || state.running_mean.shape() != cs ||
      state.running_var.shape() != cs) {
    throw ShapeError("batch_norm: channel count of input " + xs.str() +
                     " does not match scale " + scale.shape().str() + ", shift " +
                     shift.shape().str() + ", running stats " + state.running_mean.shape().str());
  }
  const std::size_t count = batch * plane;
  const auto xv = x.value().data();

  BatchNormResult<T> result{x, state, std::nullopt, std::nullopt};
  std::vector<T> mu(ch), inv_std(ch);
  if (mode == Mode::train) {
    if (count == 1) {
      throw ShapeError("batch_norm: train mode needs more than one value per channel, got " +
                       xs.str());
    }
    Tensor<T> bmean(cs), bvar(cs);
    for (std::size_t c = 0; c < ch; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = xv.data() + (b * ch + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = xv.data() + (b * ch + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - m;
          sq += d * d;
        }
      }
      bmean[c] = static_cast<T>(m);
      bvar[c] = static_cast<T>(sq / static_cast<double>(count));
      mu[c] = bmean[c];
      inv_std[c] = T{1} / std::sqrt(bvar[c] + state.epsilon);
    }
    const T m = state.momentum;
    for (std::size_t c = 0; c < ch; ++c) {
      result.state.running_mean[c] = (T{1} - m) * state.running_mean[c] + m * bmean[c];
      result.state.running_var[c] = (T{1} - m) * state.running_var[c] + m * bvar[c];
    }
    result.batch_mean = std::move(bmean);
    result.batch_var = std::move(bvar);
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mu[c] = state.running_mean[c];
      inv_std[c] = T{1} / std::sqrt(state.running_var[c] + state.epsilon);
    }
  }

  Tensor<T> out(xs);
  auto o = out.data();
  const auto gamma = scale.value().data();
  const auto beta = shift.value().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t base = (b * ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        o[base + i] = gamma[c] * ((xv[base + i] - mu[c]) * inv_std[c]) + beta[c];
      }
    }
  }

  const bool train = mode == Mode::train;
  result.output = x.graph().record(
      train ? "batch_norm_train" : "batch_norm_eval", std::move(out), {x, scale, shift},
      [=](BackwardContext<T>& ctx) {
        const auto g = ctx.grad().data();
        const auto xin = ctx.input(0).data();
        const auto gam = ctx.input(1).data();
        std::vector<double> sum_g(ch, 0.0), sum_gx(ch, 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t base = (b * ch + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const double xhat = (xin[base + i] - mu[c]) * inv_std[c];
              sum_g[c] += g[base + i];
              sum_gx[c] += g[base + i] * xhat;
            }
          }
        }
        if (ctx.needs(1)) {
          Tensor<T> d(Shape{ch});
          for (std::size_t c = 0; c < ch; ++c) d[c] = static_cast<T>(sum_gx[c]);
          ctx.accumulate(1, std::move(d));
        }
        if (ctx.needs(2)) {
          Tensor<T> d(Shape{ch});
          for (std::size_t c = 0; c < ch; ++c) d[c] = static_cast<T>(sum_g[c]);
          ctx.accumulate(2, std::move(d));
        }
        if (!ctx.needs(0)) return;
        Tensor<T> dx(ctx.input(0).shape());
        auto d = dx.data();
        const double n = static_cast<double>(count);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t base = (b * ch + c) * plane;
            const double k = static_cast<double>(gam[c]) * inv_std[c];
            for (std::size_t i = 0; i < plane; ++i) {
              if (train) {
                const double xhat = (xin[base + i] - mu[c]) * inv_std[c];
                d[base + i] =
                    static_cast<T>(k * (g[base + i] - sum_g[c] / n - xhat * sum_gx[c] / n));
              } else {
                d[base + i] = static_cast<T>(k * g[base + i]);
              }
            }
          }
        }
        ctx.accumulate(0, std::move(dx));
      });
  return result;
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return x.graph().record("relu", std::move(out), {x}, [](BackwardContext<T>& ctx) {
    Tensor<T> g = ctx.grad();
    auto in = ctx.input(0).data();
    auto d = g.data();
    for (std::size_t i = 0; i < d.size(); ++i)
      if (!(in[i] > T{0})) d[i] = T{0};
    ctx.accumulate(0, std::move(g));
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) {
    if (v >= T{0}) {
      v = T{1} / (T{1} + std::exp(-v));
    } else {
      const T e = std::exp(v);
      v = e / (T{1} + e);
    }
  }
  return x.graph().record("sigmoid", std::move(out), {x}, [](BackwardContext<T>& ctx) {
    Tensor<T> g = ctx.grad();
    auto y = ctx.output().data();
    auto d = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i] * (T{1} - y[i]);
    ctx.accumulate(0, std::move(g));
  });
}

template <typename T>
Var<T> max_pool2d(Var<T> x, std::size_t window, std::size_t stride, Padding padding) {
  const Shape& xs = x.shape();
  require_rank(xs, 4, "max_pool2d");
  const std::size_t pad = padding.resolve(window);
  if (pad >= window) throw ShapeError("max_pool2d: padding must be smaller than the window");
  const std::size_t batch = xs[0], ch = xs[1], h = xs[2], w = xs[3];
  const std::size_t oh = conv_output_size(h, window, stride, pad, "max_pool2d");
  const std::size_t ow = conv_output_size(w, window, stride, pad, "max_pool2d");
  Tensor<T> out(Shape{batch, ch, oh, ow});
  std::vector<std::size_t> argmax(out.size());
  const auto xv = x.value().data();
  auto o = out.data();
  for (std::size_t p = 0; p < batch * ch; ++p) {
    const T* plane = xv.data() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_at = 0;
        bool found = false;
        for (std::size_t ky = 0; ky < window; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t kx = 0; kx < window; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            const std::size_t at = static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix);
            if (!found || plane[at] > best) {
              best = plane[at];
              best_at = at;
              found = true;
            }
          }
        }
        const std::size_t oi = (p * oh + oy) * ow + ox;
        o[oi] = best;
        argmax[oi] = p * h * w + best_at;
      }
    }
  }
  return x.graph().record("max_pool2d", std::move(out), {x},
                          [argmax = std::move(argmax)](BackwardContext<T>& ctx) {
                            Tensor<T> dx(ctx.input(0).shape());
                            auto g = ctx.grad().data();
                            for (std::size_t i = 0; i < g.size(); ++i) dx[argmax[i]] += g[i];
                            ctx.accumulate(0, std::move(dx));
                          });
}

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  const Shape& xs = x.shape();
  require_rank(xs, 4, "global_avg_pool");
  const std::size_t bc = xs[0] * xs[1], plane = xs[2] * xs[3];
  Tensor<T> out(Shape{xs[0], xs[1]});
  const auto xv = x.value().data();
  for (std::size_t p = 0; p < bc; ++p) {
    T s{0};
    for (std::size_t i = 0; i < plane; ++i) s += xv[p * plane + i];
    out[p] = s / static_cast<T>(plane);
  }
  return x.graph().record("global_avg_pool", std::move(out), {x},
                          [bc, plane](BackwardContext<T>& ctx) {
                            Tensor<T> dx(ctx.input(0).shape());
                            auto g = ctx.grad().data();
                            const T inv = T{1} / static_cast<T>(plane);
                            for (std::size_t p = 0; p < bc; ++p)
                              for (std::size_t i = 0; i < plane; ++i) dx[p * plane + i] = g[p] * inv;
                            ctx.accumulate(0, std::move(dx));
                          });
}

template <typename T>
Var<T> global_max_pool(Var<T> x) {
  const Shape& xs = x.shape();
  require_rank(xs, 4, "global_max_pool");
  const std::size_t bc = xs[0] * xs[1], plane = xs[2] * xs[3];
  Tensor<T> out(Shape{xs[0], xs[1]});
  std::vector<std::size_t> argmax(bc);
  const auto xv = x.value().data();
  for (std::size_t p = 0; p < bc; ++p) {
    std::size_t best = p * plane;
    for (std::size_t i = 1; i < plane; ++i)
      if (xv[p * plane + i] > xv[best]) best = p * plane + i;
    out[p] = xv[best];
    argmax[p] = best;
  }
  return x.graph().record("global_max_pool", std::move(out), {x},
                          [argmax = std::move(argmax)](BackwardContext<T>& ctx) {
                            Tensor<T> dx(ctx.input(0).shape());
                            auto g = ctx.grad().data();
                            for (std::size_t p = 0; p < g.size(); ++p) dx[argmax[p]] += g[p];
                            ctx.accumulate(0, std::move(dx));
                          });
}

template <typename T>
Var<T> channel_mean(Var<T> x) {
  const Shape& xs = x.shape();
  require_rank(xs, 4, "channel_mean");
  const std::size_t batch = xs[0], ch = xs[1], plane = xs[2] * xs[3];
  Tensor<T> out(Shape{batch, 1, xs[2], xs[3]});
  const auto xv = x.value().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      T s{0};
      for (std::size_t c = 0; c < ch; ++c) s += xv[(b * ch + c) * plane + i];
      out[b * plane + i] = s / static_cast<T>(ch);
    }
  }
  return x.graph().record("channel_mean", std::move(out), {x},
                          [batch, ch, plane](BackwardContext<T>& ctx) {
                            Tensor<T> dx(ctx.input(0).shape());
                            auto g = ctx.grad().data();
                            const T inv = T{1} / static_cast<T>(ch);
                            for (std::size_t b = 0; b < batch; ++b)
                              for (std::size_t c = 0; c < ch; ++c)
                                for (std::size_t i = 0; i < plane; ++i)
                                  dx[(b * ch + c) * plane + i] = g[b * plane + i] * inv;
                            ctx.accumulate(0, std::move(dx));
                          });
}

template <typename T>
Var<T> channel_max(Var<T> x) {
  const Shape& xs = x.shape();
  require_rank(xs, 4, "channel_max");
  const std::size_t batch = xs[0], ch = xs[1], plane = xs[2] * xs[3];
  Tensor<T> out(Shape{batch, 1, xs[2], xs[3]});
  std::vector<std::size_t> argmax(batch * plane);
  const auto xv = x.value().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      std::size_t best = b * ch * plane + i;
      for (std::size_t c = 1; c < ch; ++c) {
        const std::size_t at = (b * ch + c) * plane + i;
        if (xv[at] > xv[best]) best = at;
      }
      out[b * plane + i] = xv[best];
      argmax[b * plane + i] = best;
    }
  }
  return x.graph().record("channel_max", std::move(out), {x},
                          [argmax = std::move(argmax)](BackwardContext<T>& ctx) {
                            Tensor<T> dx(ctx.input(0).shape());
                            auto g = ctx.grad().data();
                            for (std::size_t p = 0; p < g.size(); ++p) dx[argmax[p]] += g[p];
                            ctx.accumulate(0, std::move(dx));
                          });
}

template <typename T>
Var<T> fully_connected(Var<T> x, Var<T> weight, Var<T> bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.rank() != 2 || ws.rank() != 2 || xs[1] != ws[0] || bias.shape() != Shape{ws[1]}) {
    throw ShapeError("fully_connected: incompatible input " + xs.str() + ", weight " + ws.str() +
                     ", bias " + bias.shape().str());
  }
  const std::size_t batch = xs[0], f = xs[1], k = ws[1];
  Tensor<T> out(Shape{batch, k});
  auto o = out.data();
  const auto bv = bias.value().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < k; ++j) o[b * k + j] = bv[j];
  detail::gemm_nn(x.value().data().data(), weight.value().data().data(), o.data(), batch, f, k);
  return x.graph().record(
      "fully_connected", std::move(out), {x, weight, bias},
      [batch, f, k](BackwardContext<T>& ctx) {
        const T* g = ctx.grad().data().data();
        if (ctx.needs(0)) {
          Tensor<T> dx(Shape{batch, f});
          detail::gemm_nt(g, ctx.input(1).data().data(), dx.data().data(), batch, k, f);
          ctx.accumulate(0, std::move(dx));
        }
        if (ctx.needs(1)) {
          Tensor<T> dw(Shape{f, k});
          detail::gemm_tn(ctx.input(0).data().data(), g, dw.data().data(), f, batch, k);
          ctx.accumulate(1, std::move(dw));
        }
        if (ctx.needs(2)) {
          Tensor<T> db(Shape{k});
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t j = 0; j < k; ++j) db[j] += g[b * k + j];
          ctx.accumulate(2, std::move(db));
        }
      });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& first = parts.front().shape();
  require_rank(first, 4, "concat_channels");
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.rank() != 4 || s[0] != first[0] || s[2] != first[2] || s[3] != first[3]) {
      throw ShapeError("concat_channels: incompatible shapes " + first.str() + " and " + s.str());
    }
    widths.push_back(s[1]);
    total += s[1];
  }
  const std::size_t batch = first[0], plane = first[2] * first[3];
  Tensor<T> out(Shape{batch, total, first[2], first[3]});
  auto o = out.data();
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto src = parts[k].value().data();
      std::copy_n(src.data() + b * widths[k] * plane, widths[k] * plane,
                  o.data() + (b * total + offset) * plane);
      offset += widths[k];
    }
  }
  return parts.front().graph().record(
      "concat_channels", std::move(out), parts,
      [widths, batch, total, plane](BackwardContext<T>& ctx) {
        const auto g = ctx.grad().data();
        std::size_t offset = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          if (ctx.needs(k)) {
            Tensor<T> d(ctx.input(k).shape());
            for (std::size_t b = 0; b < batch; ++b) {
              std::copy_n(g.data() + (b * total + offset) * plane, widths[k] * plane,
                          d.data().data() + b * widths[k] * plane);
            }
            ctx.accumulate(k, std::move(d));
          }
          offset += widths[k];
        }
      });
}

template <typename T>
Var<T> scale_channels(Var<T> x, Var<T> weights) {
  const Shape& xs = x.shape();
  require_rank(xs, 4, "scale_channels");
  if (weights.shape() != Shape{xs[0], xs[1]}) {
    throw ShapeError("scale_channels: weights " + weights.shape().str() +
                     " do not match feature map " + xs.str());
  }
  const std::size_t bc = xs[0] * xs[1], plane = xs[2] * xs[3];
  Tensor<T> out = x.value();
  auto o = out.data();
  const auto wv = weights.value().data();
  for (std::size_t p = 0; p < bc; ++p)
    for (std::size_t i = 0; i < plane; ++i) o[p * plane + i] *= wv[p];
  return x.graph().record("scale_channels", std::move(out), {x, weights},
                          [bc, plane](BackwardContext<T>& ctx) {
                            const auto g = ctx.grad().data();
                            if (ctx.needs(0)) {
                              Tensor<T> dx = ctx.grad();
                              const auto wv = ctx.input(1).data();
                              for (std::size_t p = 0; p < bc; ++p)
                                for (std::size_t i = 0; i < plane; ++i) dx[p * plane + i] *= wv[p];
                              ctx.accumulate(0, std::move(dx));
                            }
                            if (ctx.needs(1)) {
                              Tensor<T> dw(ctx.input(1).shape());
                              const auto xv = ctx.input(0).data();
                              for (std::size_t p = 0; p < bc; ++p) {
                                T s{0};
                                for (std::size_t i = 0; i < plane; ++i)
                                  s += g[p * plane + i] * xv[p * plane + i];
                                dw[p] = s;
                              }
                              ctx.accumulate(1, std::move(dw));
                            }
                          });
}

template <typename T>
Var<T> scale_spatial(Var<T> x, Var<T> map) {
  const Shape& xs = x.shape();
  require_rank(xs, 4, "scale_spatial");
  if (map.shape() != Shape{xs[0], 1, xs[2], xs[3]}) {
    throw ShapeError("scale_spatial: map " + map.shape().str() + " does not match feature map " +
                     xs.str());
  }
  const std::size_t batch = xs[0], ch = xs[1], plane = xs[2] * xs[3];
  Tensor<T> out = x.value();
  auto o = out.data();
  const auto mv = map.value().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t i = 0; i < plane; ++i) o[(b * ch + c) * plane + i] *= mv[b * plane + i];
  return x.graph().record(
      "scale_spatial", std::move(out), {x, map}, [batch, ch, plane](BackwardContext<T>& ctx) {
        const auto g = ctx.grad().data();
        if (ctx.needs(0)) {
          Tensor<T> dx = ctx.grad();
          const auto mv = ctx.input(1).data();
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < ch; ++c)
              for (std::size_t i = 0; i < plane; ++i) dx[(b * ch + c) * plane + i] *= mv[b * plane + i];
          ctx.accumulate(0, std::move(dx));
        }
        if (ctx.needs(1)) {
          Tensor<T> dm(ctx.input(1).shape());
          const auto xv = ctx.input(0).data();
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < ch; ++c)
              for (std::size_t i = 0; i < plane; ++i) {
                const std::size_t at = (b * ch + c) * plane + i;
                dm[b * plane + i] += g[at] * xv[at];
              }
          ctx.accumulate(1, std::move(dm));
        }
      });
}

namespace {

// [B, R, C] <-> [B, C, R] with R = H*W
template <typename T>
Tensor<T> swap_inner(const Tensor<T>& src, std::size_t batch, std::size_t rows, std::size_t cols,
                     Shape out_shape) {
  Tensor<T> out(std::move(out_shape));
  const auto s = src.data();
  auto d = out.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        d[(b * cols + c) * rows + r] = s[(b * rows + r) * cols + c];
  return out;
}

}  // namespace

template <typename T>
Var<T> to_tokens(Var<T> x) {
  const Shape xs = x.shape();
  require_rank(xs, 4, "to_tokens");
  const std::size_t batch = xs[0], ch = xs[1], hw = xs[2] * xs[3];
  return x.graph().record("to_tokens", swap_inner(x.value(), batch, ch, hw, Shape{batch, hw, ch}),
                          {x}, [xs, batch, ch, hw](BackwardContext<T>& ctx) {
                            ctx.accumulate(0, swap_inner(ctx.grad(), batch, hw, ch, xs));
                          });
}

template <typename T>
Var<T> from_tokens(Var<T> tokens, std::size_t height, std::size_t width) {
  const Shape ts = tokens.shape();
  require_rank(ts, 3, "from_tokens");
  if (ts[1] != height * width) {
    throw ShapeError("from_tokens: " + ts.str() + " does not hold " + std::to_string(height) +
                     "x" + std::to_string(width) + " positions");
  }
  const std::size_t batch = ts[0], hw = ts[1], ch = ts[2];
  return tokens.graph().record(
      "from_tokens", swap_inner(tokens.value(), batch, hw, ch, Shape{batch, ch, height, width}),
      {tokens}, [ts, batch, ch, hw](BackwardContext<T>& ctx) {
        ctx.accumulate(0, swap_inner(ctx.grad(), batch, ch, hw, ts));
      });
}

#define XFNET_INSTANTIATE_NN(T)                                                            \
  template Var<T> conv2d<T>(Var<T>, const Conv2dParams<T>&);                               \
  template Var<T> depthwise_conv2d<T>(Var<T>, Var<T>, std::size_t, Padding);               \
  template Var<T> pointwise_conv2d<T>(Var<T>, Var<T>);                                     \
  template Var<T> separable_conv2d<T>(Var<T>, Var<T>, Var<T>, std::size_t, Padding);       \
  template struct BatchNormState<T>;                                                       \
  template BatchNormResult<T> batch_norm<T>(Var<T>, Var<T>, Var<T>, const BatchNormState<T>&, \
                                            Mode);                                         \
  template Var<T> relu<T>(Var<T>);                                                         \
  template Var<T> sigmoid<T>(Var<T>);                                                      \
  template Var<T> max_pool2d<T>(Var<T>, std::size_t, std::size_t, Padding);                \
  template Var<T> global_avg_pool<T>(Var<T>);                                              \
  template Var<T> global_max_pool<T>(Var<T>);                                              \
  template Var<T> channel_mean<T>(Var<T>);                                                 \
  template Var<T> channel_max<T>(Var<T>);                                                  \
  template Var<T> fully_connected<T>(Var<T>, Var<T>, Var<T>);                              \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                          \
  template Var<T> scale_channels<T>(Var<T>, Var<T>);                                       \
  template Var<T> scale_spatial<T>(Var<T>, Var<T>);                                        \
  template Var<T> to_tokens<T>(Var<T>);                                                    \
  template Var<T> from_tokens<T>(Var<T>, std::size_t, std::size_t);

XFNET_INSTANTIATE_NN(float)
XFNET_INSTANTIATE_NN(double)

}  // namespace xfnet
