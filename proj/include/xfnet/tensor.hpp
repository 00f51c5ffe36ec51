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

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "xfnet/error.hpp"

namespace xfnet {

/// Ordered list of dimension sizes, every size >= 1. A default Shape is the
/// scalar shape {1}.
class Shape {
 public:
  Shape() : dims_{1} {}
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
  std::size_t numel() const;
  const std::vector<std::size_t>& dims() const { return dims_; }

  /// "728x14x14"
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  void validate() const;

  std::vector<std::size_t> dims_;
};

/// Dense row-major array. Feature maps are laid out (batch, channel, height,
/// width).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : data_(1, T{0}) {}
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T value) { return Tensor(Shape{1}, value); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }
  std::size_t rank() const { return shape_.rank(); }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T operator[](std::size_t i) const { return data_[i]; }
  T& operator[](std::size_t i) { return data_[i]; }

  /// Bounds-checked multi-index access.
  T at(std::initializer_list<std::size_t> index) const;
  T& at(std::initializer_list<std::size_t> index);

  /// Value of a single-element tensor.
  T item() const;

  Tensor reshaped(Shape shape) const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<T> data_;
};

/// Throws ShapeError unless `a == b`; `what` names the operation.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

/// Throws ShapeError unless `s` has rank `rank`.
void require_rank(const Shape& s, std::size_t rank, const char* what);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace xfnet
