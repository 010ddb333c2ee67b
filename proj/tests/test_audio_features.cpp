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

#include <cmath>
#include <numbers>
#include <random>

#include "mff/audio_features.hpp"
#include "mff/image.hpp"
#include "mff/wav.hpp"
#include "oracles.hpp"

namespace {

using namespace mff;

WaveformClip sine(double hz, double amp = 0.5, std::size_t n = kSampleRateHz) {
  WaveformClip c;
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.samples[i] = amp * std::sin(2 * std::numbers::pi * hz * i / kSampleRateHz);
  return c;
}

WaveformClip noise(std::uint64_t seed, double amp) {
  Rng rng(seed);
  WaveformClip c;
  c.samples.resize(kSampleRateHz);
  for (auto& s : c.samples) s = uniform(rng, -amp, amp);
  return c;
}

TEST(FrameAndWindow, CountsForPaperConfigs) {
  const std::vector<double> one_second(16000, 0.1), one_window(400, 0.1);
  EXPECT_EQ(frame_and_window(one_second, 400, 160).size(), 98u);
  EXPECT_EQ(frame_and_window(one_window, 400, 160).size(), 1u);
  EXPECT_EQ(frame_and_window(one_second, 400, 360).size(), 44u);
}

TEST(FrameAndWindow, MillisecondOverload) {
  WaveformClip c;
  c.samples.assign(16000, 0.0);
  EXPECT_EQ(frame_and_window(c, 25.0, 10.0).size(), 98u);
  EXPECT_EQ(frame_and_window(c, 25.0, 22.5).size(), 44u);
}

TEST(FrameAndWindow, WindowLongerThanClipIsConfigError) {
  const std::vector<double> short_clip(399, 0.0);
  EXPECT_THROW(frame_and_window(short_clip, 400, 160), ConfigError);
}

TEST(FrameAndWindow, FrameCountFormulaHoldsForRandomShapes) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + gen() % 3000, w = 1 + gen() % n, h = 1 + gen() % 500;
    const std::vector<double> x(n, 1.0);
    EXPECT_EQ(frame_and_window(x, w, h).size(), (n - w) / h + 1) << n << " " << w << " " << h;
  }
}

TEST(FrameAndWindow, FramesAreHannWeighted) {
  std::vector<double> x(800);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 1.0 + 0.001 * i;
  const auto frames = frame_and_window(x, 400, 160);
  for (std::size_t i = 0; i < 400; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * i / 400.0);
    EXPECT_NEAR(frames[1][i], x[160 + i] * w, 1e-15);
  }
  EXPECT_EQ(frames[0][0], 0.0);
}

TEST(FeatureConfig, PresetShapes) {
  EXPECT_EQ(FeatureConfig::paper_mel().rows(), 128u);
  EXPECT_EQ(FeatureConfig::paper_mel().frames(), 44u);
  EXPECT_EQ(FeatureConfig::paper_mfcc().rows(), 24u);
  EXPECT_EQ(FeatureConfig::paper_mfcc().frames(), 98u);
  EXPECT_EQ(FeatureConfig::tiny_mel().rows(), 32u);
  EXPECT_EQ(FeatureConfig::tiny_mel().frames(), 16u);
  EXPECT_EQ(FeatureConfig::tiny_mfcc().rows(), 24u);
  EXPECT_EQ(FeatureConfig::tiny_mfcc().frames(), 25u);
  for (const auto& c : {FeatureConfig::paper_mel(), FeatureConfig::paper_mfcc(), FeatureConfig::tiny_mel(),
                        FeatureConfig::tiny_mfcc()})
    EXPECT_NO_THROW(c.validate());
}

TEST(FeatureConfig, RejectsBrokenInvariants) {
  auto c = FeatureConfig::paper_mfcc();
  c.hop_ms = 30.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = FeatureConfig::paper_mfcc();
  c.n_coeffs = 25;
  EXPECT_THROW(c.validate(), ConfigError);
  c = FeatureConfig::paper_mel();
  c.fmax_hz = 9000;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(MelFilterbank, RowsNonNegativeNonEmptyAndBandLimited) {
  for (auto [n_mels, fmin, fmax] : {std::tuple{128u, 0.0, 8000.0}, {24u, 0.0, 8000.0}, {40u, 300.0, 3400.0}}) {
    const auto fb = mel_filterbank(n_mels, 512, 16000, fmin, fmax);
    ASSERT_EQ(fb.weights.size(), n_mels * 257u);
    for (std::size_t m = 0; m < n_mels; ++m) {
      double row_max = 0;
      for (std::size_t k = 0; k < fb.n_bins; ++k) {
        const double w = fb.at(m, k), f = k * 16000.0 / 512.0;
        EXPECT_GE(w, 0.0);
        if (f < fmin || f > fmax) {
          EXPECT_EQ(w, 0.0) << "bin " << k << " outside band";
        }
        row_max = std::max(row_max, w);
      }
      EXPECT_GT(row_max, 0.0) << "filter " << m;
    }
  }
}

TEST(MelFilterbank, CentersIncreaseAndMatchSlaneyFormula) {
  const auto centers = mel_center_frequencies(128, 0, 8000);
  const auto ref = oracle::slaney_centers(128, 0, 8000);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    EXPECT_NEAR(centers[i], ref[i], 1e-9 * ref[i] + 1e-9);
    if (i) {
      EXPECT_GT(centers[i], centers[i - 1]);
    }
  }
}

TEST(MelFilterbank, TopFilterStaysBelowNyquist) {
  const auto fb = mel_filterbank(24, 512, 16000, 0, 8000);
  EXPECT_LE(fb.edges_hz[23 + 2], 8000.0 + 1e-9);
}

TEST(MelFilterbank, TooManyBandsIsConfigError) {
  EXPECT_THROW(mel_filterbank(128, 64, 16000, 0, 8000), ConfigError);
  EXPECT_THROW(mel_filterbank(24, 512, 16000, 5000, 4000), ConfigError);
}

TEST(LogMel, SilentClipIsLogFloorEverywhere) {
  WaveformClip silent;
  silent.samples.assign(16000, 0.0);
  const auto f = log_mel_spectrogram(silent, FeatureConfig::paper_mel());
  ASSERT_EQ(f.rows, 128u);
  ASSERT_EQ(f.cols, 44u);
  for (double v : f.values) EXPECT_EQ(v, std::log(1e-10));
}

TEST(LogMel, PaperShapeForShortAndLongClips) {
  for (std::size_t n : {1000u, 16000u, 24000u}) {
    const auto f = log_mel_spectrogram(sine(440, 0.5, n), FeatureConfig::paper_mel());
    EXPECT_EQ(f.rows, 128u);
    EXPECT_EQ(f.cols, 44u);
    for (double v : f.values) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(LogMel, OneKilohertzPeaksAtNearestCenter) {
  const auto centers = oracle::slaney_centers(128, 0, 8000);
  const auto nearest = static_cast<std::size_t>(
      std::min_element(centers.begin(), centers.end(),
                       [](double a, double b) { return std::abs(a - 1000) < std::abs(b - 1000); }) -
      centers.begin());
  const auto f = log_mel_spectrogram(sine(1000), FeatureConfig::paper_mel());
  for (std::size_t t = 0; t < f.cols; ++t) {
    std::size_t arg = 0;
    for (std::size_t m = 1; m < f.rows; ++m)
      if (f.at(m, t) > f.at(arg, t)) arg = m;
    EXPECT_EQ(arg, nearest) << "frame " << t;
  }
}

TEST(LogMel, MonotoneInAmplitude) {
  const auto base = noise(11, 0.4);
  WaveformClip louder = base;
  for (auto& s : louder.samples) s *= 2.0;
  for (const auto& cfg : {FeatureConfig::paper_mel(), FeatureConfig::tiny_mel()}) {
    const auto a = log_mel_spectrogram(base, cfg), b = log_mel_spectrogram(louder, cfg);
    for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_GE(b.values[i], a.values[i]);
  }
}

TEST(LogMel, DeterministicBitForBit) {
  const auto clip = noise(5, 0.9);
  EXPECT_EQ(log_mel_spectrogram(clip, FeatureConfig::paper_mel()).values,
            log_mel_spectrogram(clip, FeatureConfig::paper_mel()).values);
  EXPECT_EQ(mfcc(clip, FeatureConfig::paper_mfcc()).values, mfcc(clip, FeatureConfig::paper_mfcc()).values);
}

TEST(LogMel, RejectsInvalidSamples) {
  auto c = sine(300);
  c.samples[10] = std::nan("");
  EXPECT_THROW(log_mel_spectrogram(c, FeatureConfig::paper_mel()), InputError);
  c = sine(300);
  c.samples[10] = 1.5;
  EXPECT_THROW(log_mel_spectrogram(c, FeatureConfig::paper_mel()), InputError);
  c = sine(300);
  c.sample_rate_hz = 8000;
  EXPECT_THROW(log_mel_spectrogram(c, FeatureConfig::paper_mel()), InputError);
  EXPECT_THROW(log_mel_spectrogram(sine(300), FeatureConfig::paper_mfcc()), ConfigError);
}

TEST(FitToOneSecond, PadsAndTruncates) {
  EXPECT_EQ(fit_to_one_second(sine(100, 0.5, 10)).samples.size(), 16000u);
  const auto padded = fit_to_one_second(sine(100, 0.5, 10));
  EXPECT_EQ(padded.samples[15999], 0.0);
  const auto cut = fit_to_one_second(sine(100, 0.5, 20000));
  EXPECT_EQ(cut.samples.size(), 16000u);
  EXPECT_EQ(cut.samples[123], sine(100, 0.5, 20000).samples[123]);
}

TEST(Mfcc, PaperShape) {
  const auto f = mfcc(noise(2, 0.3), FeatureConfig::paper_mfcc());
  EXPECT_EQ(f.rows, 24u);
  EXPECT_EQ(f.cols, 98u);
  EXPECT_EQ(f.kind, FeatureKind::mfcc);
}

TEST(Mfcc, ConstantClipGivesIdenticalColumns) {
  WaveformClip dc;
  dc.samples.assign(16000, 0.25);
  const auto f = mfcc(dc, FeatureConfig::paper_mfcc());
  for (std::size_t t = 1; t < f.cols; ++t)
    for (std::size_t r = 0; r < f.rows; ++r) EXPECT_EQ(f.at(r, t), f.at(r, 0));
}

TEST(Mfcc, DctRoundTripRecoversLogEnergies) {
  auto cfg = FeatureConfig::paper_mfcc();
  cfg.kind = FeatureKind::mel;
  const auto clip = noise(8, 0.5);
  const auto logmel = log_mel_spectrogram(clip, cfg);
  const auto coeffs = mfcc(clip, FeatureConfig::paper_mfcc());
  for (std::size_t t : {0u, 50u, 97u}) {
    std::vector<double> energies(24), c(24);
    for (std::size_t m = 0; m < 24; ++m) {
      energies[m] = logmel.at(m, t);
      c[m] = coeffs.at(m, t);
    }
    const auto back = idct2_orthonormal(c);
    for (std::size_t m = 0; m < 24; ++m) EXPECT_NEAR(back[m], energies[m], 1e-9);
  }
}

TEST(Dct, MatchesMatrixDefinition) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-5, 5);
  for (std::size_t n : {1u, 2u, 7u, 24u, 128u}) {
    std::vector<double> x(n);
    for (auto& v : x) v = u(gen);
    const auto y = dct2_orthonormal(x), ref = oracle::dct_matrix_apply(x);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y[i], ref[i], 1e-10);
    const auto back = idct2_orthonormal(y);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(back[i], x[i], 1e-10);
  }
}

TEST(Wav, RoundTripWithin16BitQuantization) {
  auto clip = sine(440, 0.7, 16000);
  const auto dir = oracle::scratch_dir("wav");
  write_wav((dir / "a.wav").string(), clip);
  const auto back = read_wav((dir / "a.wav").string());
  ASSERT_EQ(back.samples.size(), clip.samples.size());
  for (std::size_t i = 0; i < clip.samples.size(); ++i) EXPECT_NEAR(back.samples[i], clip.samples[i], 2.0 / 32767);
}

TEST(Wav, RejectsWrongFormat) {
  auto clip = sine(440);
  clip.sample_rate_hz = 44100;
  auto bytes = encode_wav(clip);
  const std::vector<unsigned char> raw(bytes.begin(), bytes.end());
  EXPECT_THROW(parse_wav(raw, "x"), InputError);
  EXPECT_THROW(parse_wav({'n', 'o', 'p', 'e'}, "x"), InputError);
}

TEST(Png, RoundTripAndCameraLoader) {
  CameraFrame f(240, 300);
  for (std::size_t i = 0; i < f.rgb.size(); ++i) f.rgb[i] = static_cast<std::uint8_t>(i * 7);
  const auto dir = oracle::scratch_dir("png");
  write_png((dir / "f.png").string(), f);
  EXPECT_EQ(read_png((dir / "f.png").string()), f);
  const auto cam = load_camera_frame((dir / "f.png").string());
  EXPECT_EQ(cam.height, 224u);
  EXPECT_EQ(cam.width, 224u);
  CameraFrame small(100, 300);
  write_png((dir / "s.png").string(), small);
  EXPECT_THROW(load_camera_frame((dir / "s.png").string()), InputError);
}

TEST(Resize, ConstantImageStaysConstant) {
  CameraFrame f(224, 224);
  std::fill(f.rgb.begin(), f.rgb.end(), 77);
  const auto r = resize_bilinear(f, 64, 64);
  for (auto v : r.rgb) EXPECT_EQ(v, 77);
}

}  // namespace
