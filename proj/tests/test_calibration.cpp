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

#include <gtest/gtest.h>

#include <random>

#include "mff/calibration.hpp"
#include "mff/plot.hpp"
#include "oracles.hpp"

namespace {

using namespace mff;

std::vector<ScoredPrediction> make(const std::vector<double>& conf, const std::vector<bool>& correct) {
  std::vector<ScoredPrediction> out;
  for (std::size_t i = 0; i < conf.size(); ++i) out.push_back({conf[i], correct[i]});
  return out;
}

TEST(Ece, HandExample) {
  // Ten predictions at 0.9 confidence, eight correct: |0.8 - 0.9| = 0.10.
  std::vector<ScoredPrediction> p(10, {0.9, true});
  p[0].correct = p[1].correct = false;
  const auto r = ece(p);
  EXPECT_NEAR(r.ece, 0.10, 1e-12);
  EXPECT_NEAR(r.ece_percent, 10.0, 1e-10);
  EXPECT_EQ(r.bins[8].count, 10u);
}

TEST(Ece, FourRecordExample) {
  const auto p = make({0.95, 0.95, 0.65, 0.65}, {true, true, false, true});
  const auto r = ece(p);
  EXPECT_NEAR(r.ece, 0.10, 1e-12);
  EXPECT_EQ(r.bins[9].count, 2u);
  EXPECT_EQ(r.bins[6].count, 2u);
  EXPECT_DOUBLE_EQ(r.bins[6].accuracy, 0.5);
}

TEST(Ece, TwoBinHandExample) {
  // bin (0.5,0.6]: conf .55,.55 acc 1/2 -> gap .05; bin (0.9,1]: conf .95,.95 acc 1 -> gap .05
  const auto p = make({0.55, 0.55, 0.95, 0.95}, {true, false, true, true});
  EXPECT_NEAR(ece(p).ece, 0.05, 1e-12);
}

TEST(Ece, BoundariesBelongToTheLowerBin) {
  EXPECT_EQ(bin_index(0.0, 10), 0u);
  EXPECT_EQ(bin_index(0.1, 10), 0u);
  EXPECT_EQ(bin_index(0.5, 10), 4u);
  EXPECT_EQ(bin_index(std::nextafter(0.5, 1.0), 10), 5u);
  EXPECT_EQ(bin_index(0.7, 10), 6u);
  EXPECT_EQ(bin_index(1.0, 10), 9u);
  for (std::size_t M : {3u, 7u, 15u})
    for (std::size_t m = 1; m <= M; ++m) EXPECT_EQ(bin_index(static_cast<double>(m) / M, M), m - 1);
}

TEST(Ece, MatchesTwoPassOracleOnRandomSets) {
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> u(0.5, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + gen() % 200;
    std::vector<double> conf(n);
    std::vector<bool> correct(n);
    for (std::size_t i = 0; i < n; ++i) {
      conf[i] = gen() % 10 == 0 ? (gen() % 10 + 1) / 10.0 : u(gen);
      correct[i] = gen() % 3 != 0;
    }
    for (std::size_t M : {5u, 10u, 15u}) {
      const auto r = ece(make(conf, correct), M);
      EXPECT_NEAR(r.ece, oracle::ece_two_pass(conf, correct, M), 1e-12);
      EXPECT_GE(r.ece, 0.0);
      EXPECT_LE(r.ece, 1.0);
      std::size_t total = 0;
      for (const auto& b : r.bins) total += b.count;
      EXPECT_EQ(total, n);
    }
  }
}

TEST(Ece, Identities) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.5, 1.0);
  std::vector<double> conf(500);
  std::vector<bool> correct(500);
  for (std::size_t i = 0; i < 500; ++i) {
    conf[i] = u(gen);
    correct[i] = u(gen) < conf[i];
  }
  const auto p = make(conf, correct);
  const auto one = ece(p, 1);
  EXPECT_NEAR(one.ece, std::abs(one.overall_accuracy - one.avg_confidence), 1e-12);
  for (std::size_t M : {5u, 10u, 20u}) EXPECT_GE(ece(p, M).ece + 1e-12, one.ece);
  // Perfect calibration: confidence 1 and always right.
  EXPECT_EQ(ece(make({1.0, 1.0}, {true, true})).ece, 0.0);
}

TEST(Ece, InputValidation) {
  EXPECT_THROW(ece(make({1.2}, {true})), ValidationError);
  EXPECT_THROW(ece(std::vector<ScoredPrediction>{}), ValidationError);
  EXPECT_THROW(ece(make({0.7}, {true}), 0), ConfigError);
}

TEST(Ece, FromPredictionRecords) {
  std::vector<PredictionRecord> recs{{"a", 0.2, 0.8, kUnsafe, kUnsafe}, {"b", 0.7, 0.3, kSafe, kUnsafe}};
  const auto r = ece(std::span<const PredictionRecord>(recs));
  // bins (0.6,0.7] acc 0, (0.7,0.8] acc 1
  EXPECT_NEAR(r.ece, 0.5 * 0.7 + 0.5 * 0.2, 1e-12);
}

TEST(Reliability, GapsAndHistogram) {
  const auto p = make({0.55, 0.65, 0.65, 0.95}, {true, false, true, true});
  const auto bins = reliability_bins(p);
  ASSERT_EQ(bins.size(), 10u);
  EXPECT_NEAR(bins[6].gap, 0.15, 1e-12);
  EXPECT_NEAR(bins[0].midpoint, 0.05, 1e-12);
  EXPECT_EQ(bins[0].gap, 0.0);
  const auto h = confidence_histogram(p);
  EXPECT_EQ(h.edges.size(), 11u);
  EXPECT_EQ(h.counts[6], 2u);
  EXPECT_NEAR(h.accuracy, 0.75, 1e-12);
  EXPECT_NEAR(h.avg_confidence, 0.7, 1e-12);
}

TEST(Export, CsvJsonAndSvg) {
  const auto r = ece(make({0.55, 0.95}, {true, false}));
  const auto csv = bins_to_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "bin,count,conf,acc,gap");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 11);
  const auto j = report_to_json(r);
  EXPECT_EQ(j["bins"].size(), 10u);
  EXPECT_NEAR(j["ece"].get<double>(), r.ece, 0);
  const auto svg = reliability_diagram_svg(r, "t");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  const auto hist = confidence_histogram_svg(confidence_histogram(make({0.55, 0.95}, {true, false})), "h");
  EXPECT_NE(hist.find("<rect"), std::string::npos);
}

}  // namespace
