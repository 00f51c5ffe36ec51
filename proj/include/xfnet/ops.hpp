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

// Differentiable tensor primitives recorded on a Graph. Every function throws
// ShapeError naming both shapes when operands are incompatible.

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
/// Elementwise (Hadamard) product.
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T factor);

/// Sum of all elements, shape {1}.
template <typename T> Var<T> sum(Var<T> a);
template <typename T> Var<T> mean(Var<T> a);

/// a[m x k] * b[k x n].
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
/// Rank-2 transpose.
template <typename T> Var<T> transpose(Var<T> a);

/// Row-wise softmax of a rank-2 tensor, stabilized by max subtraction.
/// Throws NumericError on non-finite input.
template <typename T> Var<T> softmax_rows(Var<T> x);

template <typename T> Var<T> reshape(Var<T> a, Shape shape);

/// Batched product a[B x m x k] * b[B x k x n].
template <typename T> Var<T> bmm(Var<T> a, Var<T> b);
/// Swaps the last two axes of a rank-3 tensor.
template <typename T> Var<T> transpose_last2(Var<T> a);

}  // namespace xfnet
