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

#include "xfnet/ops.hpp"

#include <algorithm>
#include <cmath>

#include "gemm.hpp"

namespace xfnet {

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return a.graph().record("add", std::move(out), {a, b}, [](BackwardContext<T>& ctx) {
    ctx.accumulate(0, ctx.grad());
    ctx.accumulate(1, ctx.grad());
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return a.graph().record("sub", std::move(out), {a, b}, [](BackwardContext<T>& ctx) {
    ctx.accumulate(0, ctx.grad());
    if (ctx.needs(1)) {
      Tensor<T> g = ctx.grad();
      for (auto& v : g.data()) v = -v;
      ctx.accumulate(1, std::move(g));
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return a.graph().record("mul", std::move(out), {a, b}, [](BackwardContext<T>& ctx) {
    const auto g = ctx.grad().data();
    for (std::size_t side = 0; side < 2; ++side) {
      if (!ctx.needs(side)) continue;
      Tensor<T> d = ctx.input(1 - side);
      auto dv = d.data();
      for (std::size_t i = 0; i < dv.size(); ++i) dv[i] *= g[i];
      ctx.accumulate(side, std::move(d));
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= factor;
  return a.graph().record("scale", std::move(out), {a}, [factor](BackwardContext<T>& ctx) {
    Tensor<T> g = ctx.grad();
    for (auto& v : g.data()) v *= factor;
    ctx.accumulate(0, std::move(g));
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T total{0};
  for (T v : a.value().data()) total += v;
  return a.graph().record("sum", Tensor<T>::scalar(total), {a}, [](BackwardContext<T>& ctx) {
    ctx.accumulate(0, Tensor<T>(ctx.input(0).shape(), ctx.grad().item()));
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T{1} / static_cast<T>(a.value().size()));
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.rank() != 2 || bs.rank() != 2 || as[1] != bs[0]) {
    throw ShapeError("matmul: incompatible shapes " + as.str() + " and " + bs.str());
  }
  const std::size_t m = as[0], k = as[1], n = bs[1];
  Tensor<T> out(Shape{m, n});
  detail::gemm_nn(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n);
  return a.graph().record("matmul", std::move(out), {a, b}, [m, k, n](BackwardContext<T>& ctx) {
    const T* g = ctx.grad().data().data();
    if (ctx.needs(0)) {
      Tensor<T> da(Shape{m, k});
      detail::gemm_nt(g, ctx.input(1).data().data(), da.data().data(), m, n, k);
      ctx.accumulate(0, std::move(da));
    }
    if (ctx.needs(1)) {
      Tensor<T> db(Shape{k, n});
      detail::gemm_tn(ctx.input(0).data().data(), g, db.data().data(), k, m, n);
      ctx.accumulate(1, std::move(db));
    }
  });
}

namespace {

template <typename T>
Tensor<T> transpose_rows(const Tensor<T>& x, std::size_t batch, std::size_t rows,
                         std::size_t cols, Shape out_shape) {
  Tensor<T> out(std::move(out_shape));
  const T* src = x.data().data();
  T* dst = out.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const T* s = src + b * rows * cols;
    T* d = dst + b * rows * cols;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) d[j * rows + i] = s[i * cols + j];
  }
  return out;
}

}  // namespace

template <typename T>
Var<T> transpose(Var<T> a) {
  require_rank(a.shape(), 2, "transpose");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  return a.graph().record("transpose", transpose_rows(a.value(), 1, r, c, Shape{c, r}), {a},
                          [r, c](BackwardContext<T>& ctx) {
                            ctx.accumulate(0, transpose_rows(ctx.grad(), 1, c, r, Shape{r, c}));
                          });
}

template <typename T>
Var<T> transpose_last2(Var<T> a) {
  require_rank(a.shape(), 3, "transpose_last2");
  const std::size_t b = a.shape()[0], r = a.shape()[1], c = a.shape()[2];
  return a.graph().record(
      "transpose_last2", transpose_rows(a.value(), b, r, c, Shape{b, c, r}), {a},
      [b, r, c](BackwardContext<T>& ctx) {
        ctx.accumulate(0, transpose_rows(ctx.grad(), b, c, r, Shape{b, r, c}));
      });
}

template <typename T>
Var<T> softmax_rows(Var<T> x) {
  require_rank(x.shape(), 2, "softmax_rows");
  if (!x.value().all_finite()) throw NumericError("softmax_rows: non-finite input");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  Tensor<T> out = x.value();
  auto o = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = o.data() + i * n;
    const T mx = *std::max_element(row, row + n);
    T total{0};
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      total += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= total;
  }
  return x.graph().record("softmax_rows", std::move(out), {x}, [m, n](BackwardContext<T>& ctx) {
    // dx = y * (g - <g, y>) per row
    const auto y = ctx.output().data();
    const auto g = ctx.grad().data();
    Tensor<T> dx(Shape{m, n});
    auto d = dx.data();
    for (std::size_t i = 0; i < m; ++i) {
      T dot{0};
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] = y[i * n + j] * (g[i * n + j] - dot);
    }
    ctx.accumulate(0, std::move(dx));
  });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return a.graph().record("reshape", std::move(out), {a}, [](BackwardContext<T>& ctx) {
    ctx.accumulate(0, ctx.grad().reshaped(ctx.input(0).shape()));
  });
}

template <typename T>
Var<T> bmm(Var<T> a, Var<T> b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.rank() != 3 || bs.rank() != 3 || as[0] != bs[0] || as[2] != bs[1]) {
    throw ShapeError("bmm: incompatible shapes " + as.str() + " and " + bs.str());
  }
  const std::size_t batch = as[0], m = as[1], k = as[2], n = bs[2];
  Tensor<T> out(Shape{batch, m, n});
  const T* av = a.value().data().data();
  const T* bv = b.value().data().data();
  T* ov = out.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    detail::gemm_nn(av + i * m * k, bv + i * k * n, ov + i * m * n, m, k, n);
  }
  return a.graph().record(
      "bmm", std::move(out), {a, b}, [batch, m, k, n](BackwardContext<T>& ctx) {
        const T* g = ctx.grad().data().data();
        if (ctx.needs(0)) {
          Tensor<T> da(Shape{batch, m, k});
          const T* bv = ctx.input(1).data().data();
          for (std::size_t i = 0; i < batch; ++i) {
            detail::gemm_nt(g + i * m * n, bv + i * k * n, da.data().data() + i * m * k, m, n, k);
          }
          ctx.accumulate(0, std::move(da));
        }
        if (ctx.needs(1)) {
          Tensor<T> db(Shape{batch, k, n});
          const T* av = ctx.input(0).data().data();
          for (std::size_t i = 0; i < batch; ++i) {
            detail::gemm_tn(av + i * m * k, g + i * m * n, db.data().data() + i * k * n, k, m, n);
          }
          ctx.accumulate(1, std::move(db));
        }
      });
}

#define XFNET_INSTANTIATE_OPS(T)                     \
  template Var<T> add<T>(Var<T>, Var<T>);            \
  template Var<T> sub<T>(Var<T>, Var<T>);            \
  template Var<T> mul<T>(Var<T>, Var<T>);            \
  template Var<T> scale<T>(Var<T>, T);               \
  template Var<T> sum<T>(Var<T>);                    \
  template Var<T> mean<T>(Var<T>);                   \
  template Var<T> matmul<T>(Var<T>, Var<T>);         \
  template Var<T> transpose<T>(Var<T>);              \
  template Var<T> transpose_last2<T>(Var<T>);        \
  template Var<T> softmax_rows<T>(Var<T>);           \
  template Var<T> reshape<T>(Var<T>, Shape);         \
  template Var<T> bmm<T>(Var<T>, Var<T>);

XFNET_INSTANTIATE_OPS(float)
XFNET_INSTANTIATE_OPS(double)

}  // namespace xfnet
