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

#pragma once

#include "xfnet/graph.hpp"

namespace xfnet {

/// Channel + spatial gates. The MLP is shared between the average- and
/// max-pooled descriptors and has no bias terms.
template <typename T>
struct CbamParams {
  Var<T> mlp_w1;          // [C, hidden]
  Var<T> mlp_w2;          // [hidden, C]
  Var<T> spatial_kernel;  // [1, 2, k, k], k odd
};

/// Hidden width of the channel MLP for `channels` and reduction ratio `r`:
/// floor(channels / r), at least 1.
std::size_t cbam_hidden_width(std::size_t channels, std::size_t reduction);

/// sigmoid(MLP(avg_pool(f)) + MLP(max_pool(f))) with MLP(v) = relu(v W1) W2.
/// Returns [B, C] gates in (0, 1).
template <typename T>
Var<T> channel_attention(Var<T> f, const CbamParams<T>& p);

/// sigmoid(conv_k([mean_c(f); max_c(f)])) with same padding. Returns
/// [B, 1, H, W].
template <typename T>
Var<T> spatial_attention(Var<T> f, const CbamParams<T>& p);

/// Channel gate, then spatial gate computed on the channel-refined map.
template <typename T>
Var<T> cbam(Var<T> f, const CbamParams<T>& p);

/// Single-head attention over the H*W positions of each batch element. The
/// feature map is flattened to tokens X[HW, F_in].
template <typename T>
struct SelfAttentionParams {
  Var<T> w_q;    // [F_in, d_k]
  Var<T> w_k;    // [F_in, d_k]
  Var<T> w_v;    // [F_in, d_v]
  Var<T> w_out;  // [d_v, F_out]
};

template <typename T>
struct SelfAttentionResult {
  Var<T> output;     // [B, F_out, H, W]
  Var<T> attention;  // [B*HW, HW], row-stochastic
};

/// Q = X Wq, K = X Wk, V = X Wv, A = softmax_rows(Q K^T / sqrt(d_k)),
/// output = (A V) Wout reshaped back onto the H x W grid.
template <typename T>
SelfAttentionResult<T> self_attention_with_weights(Var<T> f, const SelfAttentionParams<T>& p);

template <typename T>
Var<T> self_attention(Var<T> f, const SelfAttentionParams<T>& p) {
  return self_attention_with_weights(f, p).output;
}

}  // namespace xfnet
