/* Copyright (c) 2026 The sherdmatch Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sherdmatch/errors.hpp"

namespace sherdmatch::nn {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned storage. Eigen picks its vectorised head/tail split from
/// the buffer address, so unaligned buffers make sums depend on where the
/// allocator happened to put them.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major n-dimensional array.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    check_dims();
  }

  Tensor(Shape shape, AlignedVector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != shape_size(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  Tensor(Shape shape, std::initializer_list<T> values)
      : Tensor(std::move(shape), AlignedVector<T>(values)) {}

  Tensor(Shape shape, const std::vector<T>& data)
      : Tensor(std::move(shape), AlignedVector<T>(data.begin(), data.end())) {}

  template <typename U>
  static Tensor cast(const Tensor<U>& other) {
    AlignedVector<T> data(other.data().begin(), other.data().end());
    return Tensor(other.shape(), std::move(data));
  }

  const Shape& shape() const { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }
  AlignedVector<T>& storage() { return data_; }
  const AlignedVector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  /// Same data, new shape with an equal element count.
  Tensor reshaped(Shape shape) const& {
    Tensor out = *this;
    out.reshape(std::move(shape));
    return out;
  }
  Tensor reshaped(Shape shape) && {
    reshape(std::move(shape));
    return std::move(*this);
  }
  void reshape(Shape shape) {
    if (shape_size(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    shape_ = std::move(shape);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T{0}); }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    require_same_shape(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, T s) { return a *= s; }
  friend Tensor operator*(T s, Tensor a) { return a *= s; }

  /// Elementwise product; shapes must match exactly.
  Tensor hadamard(const Tensor& o) const {
    require_same_shape(o, "hadamard");
    Tensor out = *this;
    for (std::size_t i = 0; i < data_.size(); ++i) out.data_[i] *= o.data_[i];
    return out;
  }

  T dot(const Tensor& o) const {
    require_same_shape(o, "dot");
    T acc{0};
    for (std::size_t i = 0; i < data_.size(); ++i) acc += data_[i] * o.data_[i];
    return acc;
  }

  T sum() const { return std::accumulate(data_.begin(), data_.end(), T{0}); }

  void require_same_shape(const Tensor& o, const char* op) const {
    if (shape_ != o.shape_) {
      throw ShapeError(std::string("shape mismatch in ") + op + ": " + shape_str(shape_) +
                       " vs " + shape_str(o.shape_));
    }
  }

  void require_rank(std::size_t r, const char* what) const {
    if (shape_.size() != r) {
      throw ShapeError(std::string(what) + " expects rank " + std::to_string(r) +
                       ", got " + shape_str(shape_));
    }
  }

  bool operator==(const Tensor& o) const = default;

 private:
  void check_dims() const {
    for (auto d : shape_) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_str(shape_));
    }
  }

  Shape shape_;
  AlignedVector<T> data_;
};

/// Copies rows [first, first + count) of the leading dimension.
template <typename T>
Tensor<T> slice_batch(const Tensor<T>& t, std::size_t first, std::size_t count) {
  if (t.rank() == 0 || first + count > t.dim(0) || count == 0) {
    throw ShapeError("batch slice out of range for " + shape_str(t.shape()));
  }
  const std::size_t stride = t.size() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = count;
  AlignedVector<T> data(t.data().begin() + static_cast<std::ptrdiff_t>(first * stride),
                      t.data().begin() + static_cast<std::ptrdiff_t>((first + count) * stride));
  return Tensor<T>(std::move(shape), std::move(data));
}

/// Concatenates along the leading (batch) dimension.
template <typename T>
Tensor<T> concat_batch(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Shape shape = parts.front().shape();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    Shape a = p.shape();
    a[0] = shape[0];
    if (a != shape) throw ShapeError("concat shape mismatch");
    rows += p.dim(0);
  }
  shape[0] = rows;
  AlignedVector<T> data;
  data.reserve(shape_size(shape));
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace sherdmatch::nn
