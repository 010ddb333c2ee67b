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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mff/common.hpp"
#include "mff/training.hpp"

namespace mff {

/// One scored prediction reduced to what calibration needs.
struct ScoredPrediction {
  double confidence = 0;
  bool correct = false;
};

inline std::vector<ScoredPrediction> scored(std::span<const PredictionRecord> records) {
  std::vector<ScoredPrediction> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.confidence(), r.correct()});
  return out;
}

struct CalibrationBin {
  double lower = 0, upper = 0;
  std::size_t count = 0;
  double avg_confidence = 0;  // 0 for empty bins
  double accuracy = 0;        // 0 for empty bins
};

struct CalibrationReport {
  std::size_t M = 0;
  std::vector<CalibrationBin> bins;
  double ece = 0;
  double ece_percent = 0;
  double overall_accuracy = 0;
  double avg_confidence = 0;
  std::size_t n = 0;
};

inline double bin_upper(std::size_t m, std::size_t M) { return static_cast<double>(m) / static_cast<double>(M); }

/// 0-based bin of `c` under ((m-1)/M, m/M] with 0 falling into the first bin.
inline std::size_t bin_index(double c, std::size_t M) {
  auto m = static_cast<std::size_t>(std::clamp(std::ceil(c * static_cast<double>(M)), 1.0, static_cast<double>(M)));
  while (m > 1 && c <= bin_upper(m - 1, M)) --m;
  while (m < M && c > bin_upper(m, M)) ++m;
  return m - 1;
}

namespace detail {
inline void check_calibration_input(std::span<const ScoredPrediction> preds, std::size_t M) {
  if (M < 1) throw ConfigError("bin count M must be at least 1");
  if (preds.empty()) throw ValidationError("calibration needs at least one prediction");
  for (const auto& p : preds)
    if (!(p.confidence >= 0.0 && p.confidence <= 1.0)) throw ValidationError("confidence outside [0, 1]");
}
}  // namespace detail

inline CalibrationReport ece(std::span<const ScoredPrediction> preds, std::size_t M = 10) {
  detail::check_calibration_input(preds, M);
  CalibrationReport rep;
  rep.M = M;
  rep.n = preds.size();
  rep.bins.resize(M);
  std::vector<double> conf_sum(M, 0.0), hits(M, 0.0);
  double total_conf = 0, total_hits = 0;
  for (const auto& p : preds) {
    const std::size_t b = bin_index(p.confidence, M);
    ++rep.bins[b].count;
    conf_sum[b] += p.confidence;
    hits[b] += p.correct;
    total_conf += p.confidence;
    total_hits += p.correct;
  }
  const double n = static_cast<double>(rep.n);
  for (std::size_t b = 0; b < M; ++b) {
    auto& bin = rep.bins[b];
    bin.lower = bin_upper(b, M);
    bin.upper = bin_upper(b + 1, M);
    if (bin.count == 0) continue;
    bin.avg_confidence = conf_sum[b] / static_cast<double>(bin.count);
    bin.accuracy = hits[b] / static_cast<double>(bin.count);
    rep.ece += static_cast<double>(bin.count) / n * std::abs(bin.accuracy - bin.avg_confidence);
  }
  rep.ece_percent = rep.ece * 100.0;
  rep.overall_accuracy = total_hits / n;
  rep.avg_confidence = total_conf / n;
  return rep;
}

inline CalibrationReport ece(std::span<const PredictionRecord> records, std::size_t M = 10) {
  const auto s = scored(records);
  return ece(std::span<const ScoredPrediction>(s), M);
}

struct ReliabilityBin {
  double midpoint = 0;
  double accuracy = 0;
  double confidence = 0;
  double gap = 0;  // |accuracy - confidence|, 0 for empty bins
  std::size_t count = 0;
};

inline std::vector<ReliabilityBin> reliability_bins(std::span<const ScoredPrediction> preds, std::size_t M = 10) {
  const auto rep = ece(preds, M);
  std::vector<ReliabilityBin> out;
  for (const auto& b : rep.bins)
    out.push_back({(b.lower + b.upper) / 2, b.accuracy, b.avg_confidence,
                   b.count ? std::abs(b.accuracy - b.avg_confidence) : 0.0, b.count});
  return out;
}

struct ConfidenceHistogram {
  std::vector<std::size_t> counts;
  std::vector<double> edges;  // M + 1
  double accuracy = 0;
  double avg_confidence = 0;
};

inline ConfidenceHistogram confidence_histogram(std::span<const ScoredPrediction> preds, std::size_t M = 10) {
  const auto rep = ece(preds, M);
  ConfidenceHistogram h;
  h.edges.push_back(0.0);
  for (const auto& b : rep.bins) {
    h.counts.push_back(b.count);
    h.edges.push_back(b.upper);
  }
  h.accuracy = rep.overall_accuracy;
  h.avg_confidence = rep.avg_confidence;
  return h;
}

inline nlohmann::ordered_json report_to_json(const CalibrationReport& r) {
  nlohmann::ordered_json j;
  j["M"] = r.M;
  j["n"] = r.n;
  j["ece"] = r.ece;
  j["ece_percent"] = r.ece_percent;
  j["overall_accuracy"] = r.overall_accuracy;
  j["avg_confidence"] = r.avg_confidence;
  auto& bins = j["bins"] = nlohmann::ordered_json::array();
  for (const auto& b : r.bins)
    bins.push_back({{"lower", b.lower}, {"upper", b.upper}, {"count", b.count}, {"avg_confidence", b.avg_confidence},
                    {"accuracy", b.accuracy}});
  return j;
}

/// bin,count,conf,acc,gap
inline std::string bins_to_csv(const CalibrationReport& r) {
  std::string out = "bin,count,conf,acc,gap\n";
  char line[160];
  for (std::size_t b = 0; b < r.bins.size(); ++b) {
    const auto& x = r.bins[b];
    std::snprintf(line, sizeof line, "%zu,%zu,%.17g,%.17g,%.17g\n", b + 1, x.count, x.avg_confidence, x.accuracy,
                  x.count ? std::abs(x.accuracy - x.avg_confidence) : 0.0);
    out += line;
  }
  return out;
}

}  // namespace mff
