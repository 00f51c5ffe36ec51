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

#include "xfnet/attention.hpp"

#include <algorithm>
#include <cmath>

#include "xfnet/nn.hpp"
#include "xfnet/ops.hpp"

namespace xfnet {

std::size_t cbam_hidden_width(std::size_t channels, std::size_t reduction) {
  if (reduction == 0) throw ConfigError("cbam reduction ratio must be >= 1");
  return std::max<std::size_t>(1, channels / reduction);
}

namespace {

template <typename T>
void check_cbam(const Shape& fs, const CbamParams<T>& p) {
  require_rank(fs, 4, "cbam");
  const Shape& w1 = p.mlp_w1.shape();
  const Shape& w2 = p.mlp_w2.shape();
  if (w1.rank() != 2 || w2.rank() != 2 || w1[0] != fs[1] || w2[1] != fs[1] || w1[1] != w2[0]) {
    throw ShapeError("cbam: MLP weights " + w1.str() + " / " + w2.str() +
                     " do not match feature map " + fs.str());
  }
  const Shape& k = p.spatial_kernel.shape();
  if (k.rank() != 4 || k[0] != 1 || k[1] != 2 || k[2] != k[3] || k[2] % 2 == 0) {
    throw ShapeError("cbam: spatial kernel must be 1x2xkxk with odd k, got " + k.str());
  }
}

template <typename T>
Var<T> shared_mlp(Var<T> v, const CbamParams<T>& p) {
  return matmul(relu(matmul(v, p.mlp_w1)), p.mlp_w2);
}

}  // namespace

template <typename T>
Var<T> channel_attention(Var<T> f, const CbamParams<T>& p) {
  check_cbam(f.shape(), p);
  return sigmoid(add(shared_mlp(global_avg_pool(f), p), shared_mlp(global_max_pool(f), p)));
}

template <typename T>
Var<T> spatial_attention(Var<T> f, const CbamParams<T>& p) {
  check_cbam(f.shape(), p);
  Var<T> pooled = concat_channels<T>({channel_mean(f), channel_max(f)});
  return sigmoid(conv2d(pooled, Conv2dParams<T>{p.spatial_kernel, std::nullopt, 1, Padding::same()}));
}

template <typename T>
Var<T> cbam(Var<T> f, const CbamParams<T>& p) {
  Var<T> refined = scale_channels(f, channel_attention(f, p));
  return scale_spatial(refined, spatial_attention(refined, p));
}

template <typename T>
SelfAttentionResult<T> self_attention_with_weights(Var<T> f, const SelfAttentionParams<T>& p) {
  const Shape fs = f.shape();
  require_rank(fs, 4, "self_attention");
  const std::size_t batch = fs[0], f_in = fs[1], h = fs[2], w = fs[3], hw = h * w;
  const Shape& qs = p.w_q.shape();
  const Shape& ks = p.w_k.shape();
  const Shape& vs = p.w_v.shape();
  const Shape& os = p.w_out.shape();
  if (qs.rank() != 2 || ks.rank() != 2 || vs.rank() != 2 || os.rank() != 2 || qs[0] != f_in ||
      ks[0] != f_in || vs[0] != f_in) {
    throw ShapeError("self_attention: projections " + qs.str() + ", " + ks.str() + ", " +
                     vs.str() + " do not accept " + std::to_string(f_in) + " input channels");
  }
  if (qs[1] != ks[1]) {
    throw ShapeError("self_attention: query width " + qs.str() + " and key width " + ks.str() +
                     " differ (d_k mismatch)");
  }
  if (os[0] != vs[1]) {
    throw ShapeError("self_attention: output projection " + os.str() + " does not accept values " +
                     vs.str());
  }
  const std::size_t d_k = qs[1], d_v = vs[1], f_out = os[1];

  Var<T> x = reshape(to_tokens(f), Shape{batch * hw, f_in});
  Var<T> q = reshape(matmul(x, p.w_q), Shape{batch, hw, d_k});
  Var<T> k = reshape(matmul(x, p.w_k), Shape{batch, hw, d_k});
  Var<T> v = reshape(matmul(x, p.w_v), Shape{batch, hw, d_v});
  Var<T> scores = scale(bmm(q, transpose_last2(k)), T{1} / std::sqrt(static_cast<T>(d_k)));
  Var<T> attention = softmax_rows(reshape(scores, Shape{batch * hw, hw}));
  Var<T> mixed = bmm(reshape(attention, Shape{batch, hw, hw}), v);
  Var<T> projected = matmul(reshape(mixed, Shape{batch * hw, d_v}), p.w_out);
  Var<T> out = from_tokens(reshape(projected, Shape{batch, hw, f_out}), h, w);
  return {out, attention};
}

#define XFNET_INSTANTIATE_ATTENTION(T)                                            \
  template Var<T> channel_attention<T>(Var<T>, const CbamParams<T>&);             \
  template Var<T> spatial_attention<T>(Var<T>, const CbamParams<T>&);             \
  template Var<T> cbam<T>(Var<T>, const CbamParams<T>&);                          \
  template SelfAttentionResult<T> self_attention_with_weights<T>(Var<T>,          \
                                                                 const SelfAttentionParams<T>&);

XFNET_INSTANTIATE_ATTENTION(float)
XFNET_INSTANTIATE_ATTENTION(double)

}  // namespace xfnet
