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

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mff/layers.hpp"

namespace mff {

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

// Keras formulation: the bias correction is folded into the step size and
// epsilon is added to the uncorrected sqrt(v).
template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(std::span<Param<T>* const> params) {
    if (m_.empty()) {
      for (const auto* p : params) {
        m_.emplace_back(p->trainable ? p->value.size() : 0, T{0});
        v_.emplace_back(p->trainable ? p->value.size() : 0, T{0});
      }
    }
    ++t_;
    const double lr_t = cfg_.learning_rate * std::sqrt(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_))) /
                        (1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T eps = static_cast<T>(cfg_.epsilon), lr = static_cast<T>(lr_t);
    for (std::size_t k = 0; k < params.size(); ++k) {
      Param<T>& p = *params[k];
      if (!p.trainable) continue;
      T* w = p.value.ptr();
      const T* g = p.grad.ptr();
      T* m = m_[k].data();
      T* v = v_[k].data();
      for (std::size_t i = 0, n = p.value.size(); i < n; ++i) {
        m[i] = b1 * m[i] + (T{1} - b1) * g[i];
        v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
        w[i] -= lr * m[i] / (std::sqrt(v[i]) + eps);
      }
    }
  }

  std::uint64_t iterations() const { return t_; }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace mff
