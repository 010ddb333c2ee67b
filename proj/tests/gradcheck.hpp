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

// Central-difference gradient check for the fusion models. The objective is
// recomputed here from the forward outputs rather than taken from backward().

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mff/networks.hpp"

namespace oracle {

struct GradCheckResult {
  std::size_t checked = 0;
  double max_rel_error = 0;
  std::vector<double> rel_errors;
  // Best error over h and the extra steps. A ReLU or max-pool kink inside
  // [x - h, x + h] spoils one step but not the limit.
  double max_refined_error = 0;
  std::vector<double> refined_errors;
  std::vector<std::string> names;
};

inline double neg_log_mean(const mff::Tensor<double>& p, const std::vector<int>& y) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s -= std::log(p[i * 2 + static_cast<std::size_t>(y[i])]);
  return s / static_cast<double>(y.size());
}

inline double objective(const mff::FusionModel<double>& model, const mff::Batch<double>& batch, std::uint64_t mask_seed) {
  mff::Rng rng(mask_seed);
  mff::ForwardContext ctx{mff::Mode::train, &rng, nullptr};
  const auto out = model.forward(batch, ctx);
  if (model.config().fusion == mff::Fusion::early) return neg_log_mean(out.probs, batch.labels);
  return neg_log_mean(out.audio_probs, batch.labels) + neg_log_mean(out.vision_probs, batch.labels);
}

inline GradCheckResult gradient_check(mff::FusionModel<double>& model, const mff::Batch<double>& batch,
                                      std::size_t n_checks, double h, std::uint64_t seed,
                                      const std::vector<double>& extra_steps = {}) {
  const std::uint64_t mask_seed = mff::derive_seed(seed, 1);
  model.zero_grad();
  {
    mff::Rng rng(mask_seed);
    mff::ForwardContext ctx{mff::Mode::train, &rng, nullptr};
    mff::FusionTape<double> tape;
    model.forward(batch, ctx, &tape);
    model.backward(tape, batch.labels);
  }
  std::vector<mff::Param<double>*> params;
  for (auto* p : model.parameters())
    if (p->trainable) params.push_back(p);
  std::mt19937_64 pick(seed);
  GradCheckResult r;
  for (std::size_t c = 0; c < n_checks; ++c) {
    auto* p = params[pick() % params.size()];
    const std::size_t i = pick() % p->value.size();
    const double analytic = p->grad[i];
    const auto rel_at = [&](double step) {
      const double saved = p->value[i];
      p->value[i] = saved + step;
      const double up = objective(model, batch, mask_seed);
      p->value[i] = saved - step;
      const double down = objective(model, batch, mask_seed);
      p->value[i] = saved;
      const double numeric = (up - down) / (2 * step);
      return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    };
    const double rel = rel_at(h);
    double refined = rel;
    for (double step : extra_steps) refined = std::min(refined, rel_at(step));
    r.rel_errors.push_back(rel);
    r.max_rel_error = std::max(r.max_rel_error, rel);
    r.refined_errors.push_back(refined);
    r.max_refined_error = std::max(r.max_refined_error, refined);
    r.names.push_back(p->name + "[" + std::to_string(i) + "]");
    ++r.checked;
  }
  return r;
}

inline mff::Batch<double> random_batch(const mff::ModelConfig& cfg, std::size_t n, std::uint64_t seed) {
  mff::Rng rng(seed);
  const auto fill = [&](mff::Shape s) {
    s.insert(s.begin(), n);
    mff::Tensor<double> t(s);
    for (auto& v : t.data) v = mff::normal01(rng);
    return t;
  };
  mff::Batch<double> b{fill(cfg.audio_shape()), fill(cfg.image_shape()), fill(cfg.image_shape()), {}};
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(i % 2));
  return b;
}

}  // namespace oracle
