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

#include "mff/mc_dropout.hpp"
#include "mff/plot.hpp"

namespace {

using namespace mff;

struct Fixture {
  std::vector<PairedSample> samples;
  Checkpoint ck;
};

Fixture untrained(double dropout) {
  auto cfg = ModelConfig::desk(Fusion::early, FeatureKind::mel);
  cfg.dropout_rate = dropout;
  BuildOptions opt;
  opt.n_pairs = 10;
  Fixture f;
  f.samples = load_samples(build_manifest(opt).manifest, cfg);
  std::vector<std::size_t> all(10);
  std::iota(all.begin(), all.end(), 0u);
  f.ck.config = cfg;
  f.ck.stats = fit_standardizer(f.samples, all);
  f.ck.params = snapshot_parameters(FusionModel<float>(cfg, 3));
  return f;
}

TEST(McDropout, RateZeroEqualsDeterministic) {
  const auto f = untrained(0.0);
  const auto det = evaluate(f.ck, f.samples);
  const auto mc = mc_evaluate(f.ck, f.samples, 5, 1);
  for (std::size_t i = 0; i < f.samples.size(); ++i) {
    EXPECT_EQ(mc.per_sample[i].mean[kSafe], det.records[i].prob_safe);
    EXPECT_EQ(mc.per_sample[i].stddev[kUnsafe], 0.0);
    EXPECT_EQ(mc.per_sample[i].predicted, det.records[i].predicted);
  }
  for (double a : mc.per_pass_accuracy) EXPECT_EQ(a, det.metrics.accuracy);
  EXPECT_EQ(mc.ensemble_accuracy, det.metrics.accuracy);
}

TEST(McDropout, SeededRunsReproduceAcrossThreads) {
  const auto f = untrained(0.5);
  const auto a = mc_evaluate(f.ck, f.samples, 6, 42, 1);
  const auto b = mc_evaluate(f.ck, f.samples, 6, 42, 3);
  EXPECT_EQ(mc_report_to_json(a).dump(), mc_report_to_json(b).dump());
  const auto c = mc_evaluate(f.ck, f.samples, 6, 43, 1);
  EXPECT_NE(mc_report_to_json(a).dump(), mc_report_to_json(c).dump());
  bool spread = false;
  for (const auto& s : a.per_sample) {
    spread = spread || s.stddev[kSafe] > 0;
    EXPECT_LE(s.min[kSafe], s.mean[kSafe]);
    EXPECT_GE(s.max[kSafe], s.mean[kSafe]);
    EXPECT_NEAR(s.mean[kSafe] + s.mean[kUnsafe], 1.0, 1e-6);
  }
  EXPECT_TRUE(spread);
  EXPECT_EQ(a.per_pass_accuracy.size(), 6u);
}

TEST(McDropout, ZeroPassesIsConfigError) {
  const auto f = untrained(0.5);
  EXPECT_THROW(mc_evaluate(f.ck, f.samples, 0, 1), ConfigError);
  EXPECT_THROW(mc_predict_sample(f.ck, f.samples[0], 0, 1), ConfigError);
}

TEST(McDropout, SingleSampleMatchesBatchRunAtRateZero) {
  const auto f = untrained(0.0);
  const auto one = mc_predict_sample(f.ck, f.samples[2], 3, 7);
  const auto all = mc_evaluate(f.ck, f.samples, 3, 7);
  EXPECT_NEAR(one.mean[kUnsafe], all.per_sample[2].mean[kUnsafe], 1e-6);
}

TEST(McDropout, WelfordOfIdenticalValuesIsExact) {
  detail::RunningMoments m;
  for (int i = 0; i < 100; ++i) m.add(0.1, 0.9);
  EXPECT_EQ(m.mean[0], 0.1);
  EXPECT_EQ(m.m2[1], 0.0);
}

TEST(AccuracyHistogram, CoversEveryPass) {
  const std::vector<double> acc{0.8, 0.85, 0.9, 0.9, 0.95, 1.0};
  const auto h = accuracy_histogram(acc, 4);
  EXPECT_EQ(h.edges.front(), 0.8);
  EXPECT_EQ(h.edges.back(), 1.0);
  EXPECT_EQ(std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0}), acc.size());
  EXPECT_GE(h.counts.back(), 1u);
  const auto flat = accuracy_histogram(std::vector<double>{0.5, 0.5}, 3);
  EXPECT_LT(flat.edges.front(), 0.5);
  EXPECT_EQ(std::accumulate(flat.counts.begin(), flat.counts.end(), std::size_t{0}), 2u);
  const auto csv = histogram_to_csv(h);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "accuracy_lower,accuracy_upper,count");
  EXPECT_NE(mc_histogram_svg(h, 0.9, "mc").find("</svg>"), std::string::npos);
}

}  // namespace
