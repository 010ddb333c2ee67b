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
#include <cmath>
#include <span>

#include "mff/common.hpp"
#include "mff/tensor.hpp"

namespace mff {

inline constexpr double kProbabilityFloor = 1e-12;

/// Mean of -log p(true class) over the batch. p is clamped at 1e-12 so the
/// loss stays finite.
template <class T>
T cross_entropy_loss(const Tensor<T>& probs, std::span<const int> labels) {
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  if (labels.size() != n) throw ConfigError("cross_entropy_loss: label count does not match batch");
  if (n == 0) throw ConfigError("cross_entropy_loss: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    if (y >= k) throw ConfigError("cross_entropy_loss: label out of range");
    total -= std::log(std::max(static_cast<double>(probs[i * k + y]), kProbabilityFloor));
  }
  return static_cast<T>(total / static_cast<double>(n));
}

/// d(mean CE)/d(logits) for softmax outputs: (p - onehot) / N.
template <class T>
Tensor<T> softmax_cross_entropy_grad(const Tensor<T>& probs, std::span<const int> labels) {
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  Tensor<T> g(probs.shape);
  const T inv_n = T{1} / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j)
      g[i * k + j] = (probs[i * k + j] - (static_cast<int>(j) == labels[i] ? T{1} : T{0})) * inv_n;
  return g;
}

}  // namespace mff
