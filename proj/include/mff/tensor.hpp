/*
 * Copyright 2026 The MFF Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mff/common.hpp"

namespace mff {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  return os.str();
}

/// Dense row-major tensor. Spatial activations use NHWC order, flat
/// activations use {N, features}.
// Eigen picks its vectorized head/tail split from the buffer address, so an
// unaligned buffer can change summation order between runs.
template <class T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

template <class T>
struct Tensor {
  Shape shape;
  AlignedVector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T{}) : shape(std::move(s)), data(element_count(shape), fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool operator==(const Tensor& other) const = default;
};

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <class T>
MatrixMap<T> as_matrix(Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return MatrixMap<T>(t.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <class T>
ConstMatrixMap<T> as_matrix(const Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap<T>(t.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

/// Concatenates along the leading (batch) axis.
template <class T>
Tensor<T> concat_batch(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != b.rank() || !std::equal(a.shape.begin() + 1, a.shape.end(), b.shape.begin() + 1))
    throw ConfigError("concat_batch: incompatible shapes " + to_string(a.shape) + " and " +
                      to_string(b.shape));
  Shape s = a.shape;
  s[0] += b.shape[0];
  Tensor<T> out(s);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

/// Rows [begin, end) along the batch axis.
template <class T>
Tensor<T> slice_batch(const Tensor<T>& t, std::size_t begin, std::size_t end) {
  Shape s = t.shape;
  s[0] = end - begin;
  const std::size_t stride = t.size() / t.shape[0];
  Tensor<T> out(s);
  std::copy(t.data.begin() + static_cast<std::ptrdiff_t>(begin * stride),
            t.data.begin() + static_cast<std::ptrdiff_t>(end * stride), out.data.begin());
  return out;
}

/// Concatenates {N, a} and {N, b} into {N, a + b} along the feature axis.
template <class T>
Tensor<T> concat_features(std::span<const Tensor<T>* const> parts) {
  const std::size_t n = parts.front()->dim(0);
  std::size_t width = 0;
  for (const auto* p : parts) {
    if (p->rank() != 2 || p->dim(0) != n) throw ConfigError("concat_features: batch mismatch");
    width += p->dim(1);
  }
  Tensor<T> out({n, width});
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t offset = 0;
    for (const auto* p : parts) {
      const std::size_t w = p->dim(1);
      std::copy_n(p->ptr() + i * w, w, out.ptr() + i * width + offset);
      offset += w;
    }
  }
  return out;
}

/// Inverse of concat_features: columns [begin, begin + width).
template <class T>
Tensor<T> slice_features(const Tensor<T>& t, std::size_t begin, std::size_t width) {
  const std::size_t n = t.dim(0), total = t.dim(1);
  Tensor<T> out({n, width});
  for (std::size_t i = 0; i < n; ++i) std::copy_n(t.ptr() + i * total + begin, width, out.ptr() + i * width);
  return out;
}

template <class T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.data.begin(), t.data.end(), [](T v) { return std::isfinite(v); });
}

}  // namespace mff
