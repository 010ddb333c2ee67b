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

// Monte-Carlo dropout: repeated forward passes with dropout left on and
// batch norm on its running statistics. Intended for development-time
// analysis, not for an in-vehicle decision path.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "mff/checkpoint.hpp"
#include "mff/common.hpp"
#include "mff/training.hpp"

namespace mff {

struct MCSampleSummary {
  std::string id;
  int label = kUnsafe;
  std::array<double, 2> mean{}, stddev{}, min{}, max{};
  int predicted = kUnsafe;
};

struct MCDropoutReport {
  std::size_t T = 0;
  std::uint64_t seed = 0;
  std::vector<double> per_pass_accuracy;
  double ensemble_accuracy = 0;
  std::vector<MCSampleSummary> per_sample;

  double mean_pass_accuracy() const {
    return std::accumulate(per_pass_accuracy.begin(), per_pass_accuracy.end(), 0.0) /
           static_cast<double>(per_pass_accuracy.size());
  }
};

namespace detail {

/// Welford accumulation: identical inputs give exactly that mean and zero spread.
struct RunningMoments {
  std::array<double, 2> mean{}, m2{}, min{}, max{};
  std::size_t n = 0;

  void add(double p_safe, double p_unsafe) {
    const std::array<double, 2> x{p_safe, p_unsafe};
    ++n;
    for (std::size_t c = 0; c < 2; ++c) {
      if (n == 1) {
        mean[c] = min[c] = max[c] = x[c];
        continue;
      }
      const double d = x[c] - mean[c];
      mean[c] += d / static_cast<double>(n);
      m2[c] += d * (x[c] - mean[c]);
      min[c] = std::min(min[c], x[c]);
      max[c] = std::max(max[c], x[c]);
    }
  }
};

inline void check_passes(std::size_t T) {
  if (T == 0) throw ConfigError("MC dropout needs at least one pass (T >= 1)");
}

}  // namespace detail

/// Runs T stochastic passes over `indices`; pass t draws every dropout mask
/// from a stream derived from (seed, t).
template <class T>
MCDropoutReport mc_run(const FusionModel<T>& model, const PreparedSet<T>& data, std::span<const std::size_t> indices,
                       std::size_t passes, std::uint64_t seed, std::size_t jobs = 1) {
  detail::check_passes(passes);
  if (indices.empty()) throw ValidationError("MC dropout needs at least one sample");
  std::vector<Tensor<T>> probs(passes);
  const auto run = [&](std::size_t t) {
    Rng rng(derive_seed(seed, t));
    probs[t] = predict(model, data, indices, Mode::infer_mc, &rng);
  };
  jobs = std::clamp<std::size_t>(jobs, 1, passes);
  if (jobs == 1) {
    for (std::size_t t = 0; t < passes; ++t) run(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j)
      pool.emplace_back([&, j] {
        try {
          for (std::size_t t; (t = next++) < passes;) run(t);
        } catch (...) {
          errors[j] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  MCDropoutReport rep;
  rep.T = passes;
  rep.seed = seed;
  const std::size_t n = indices.size();
  std::vector<detail::RunningMoments> moments(n);
  for (std::size_t t = 0; t < passes; ++t) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T ps = probs[t][i * 2 + kSafe], pu = probs[t][i * 2 + kUnsafe];
      hits += decide(ps, pu) == data.labels[indices[i]];
      moments[i].add(static_cast<double>(ps), static_cast<double>(pu));
    }
    rep.per_pass_accuracy.push_back(static_cast<double>(hits) / static_cast<double>(n));
  }
  std::size_t ensemble_hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = moments[i];
    MCSampleSummary s;
    s.id = data.samples[indices[i]].id;
    s.label = data.labels[indices[i]];
    for (std::size_t c = 0; c < 2; ++c) {
      s.mean[c] = std::clamp(m.mean[c], m.min[c], m.max[c]);
      s.stddev[c] = std::sqrt(m.m2[c] / static_cast<double>(m.n));
      s.min[c] = m.min[c];
      s.max[c] = m.max[c];
    }
    s.predicted = decide(s.mean[kSafe], s.mean[kUnsafe]);
    ensemble_hits += s.predicted == s.label;
    rep.per_sample.push_back(std::move(s));
  }
  rep.ensemble_accuracy = static_cast<double>(ensemble_hits) / static_cast<double>(n);
  return rep;
}

inline MCDropoutReport mc_evaluate(const Checkpoint& ck, std::span<const PairedSample> samples, std::size_t passes,
                                   std::uint64_t seed, std::size_t jobs = 1) {
  detail::check_passes(passes);
  const auto model = ck.instantiate();
  const auto data = prepare<float>(samples, ck.stats, ck.config);
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return mc_run(model, data, all, passes, seed, jobs);
}

inline MCSampleSummary mc_predict_sample(const Checkpoint& ck, const PairedSample& sample, std::size_t passes,
                                         std::uint64_t seed) {
  return mc_evaluate(ck, std::span(&sample, 1), passes, seed).per_sample.front();
}

struct AccuracyHistogram {
  std::vector<double> edges;  // bins + 1, ascending
  std::vector<std::size_t> counts;
};

/// Histogram of per-pass accuracies over their observed range; the last
/// bin is closed so every pass lands in exactly one bin.
inline AccuracyHistogram accuracy_histogram(std::span<const double> acc, std::size_t bins = 10) {
  if (acc.empty() || bins == 0) throw ConfigError("accuracy histogram needs passes and bins");
  double lo = *std::min_element(acc.begin(), acc.end());
  double hi = *std::max_element(acc.begin(), acc.end());
  if (hi - lo < 1e-9) {
    lo -= 0.005;
    hi += 0.005;
  }
  AccuracyHistogram h;
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins));
  h.counts.assign(bins, 0);
  for (double a : acc) {
    auto b = static_cast<std::size_t>((a - lo) / (hi - lo) * static_cast<double>(bins));
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

inline nlohmann::ordered_json mc_report_to_json(const MCDropoutReport& r) {
  nlohmann::ordered_json j;
  j["T"] = r.T;
  j["seed"] = r.seed;
  j["ensemble_accuracy"] = r.ensemble_accuracy;
  j["mean_pass_accuracy"] = r.mean_pass_accuracy();
  j["per_pass_accuracy"] = r.per_pass_accuracy;
  auto& samples = j["per_sample"] = nlohmann::ordered_json::array();
  for (const auto& s : r.per_sample) {
    nlohmann::ordered_json e;
    e["id"] = s.id;
    e["label"] = class_name(s.label);
    e["predicted"] = class_name(s.predicted);
    e["mean"] = s.mean;
    e["std"] = s.stddev;
    samples.push_back(std::move(e));
  }
  return j;
}

/// accuracy_lower,accuracy_upper,count
inline std::string histogram_to_csv(const AccuracyHistogram& h) {
  std::string out = "accuracy_lower,accuracy_upper,count\n";
  char line[96];
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    std::snprintf(line, sizeof line, "%.6f,%.6f,%zu\n", h.edges[b], h.edges[b + 1], h.counts[b]);
    out += line;
  }
  return out;
}

}  // namespace mff
