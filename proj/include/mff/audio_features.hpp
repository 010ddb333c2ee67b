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

// Log-Mel spectrogram and MFCC extraction for 1-second, 16 kHz command clips.
//
// Pipeline: pad/truncate to 1 s -> Hann-windowed frames (no centering) ->
// |FFT|^2 -> Slaney mel filterbank -> natural log with a floor. The MFCC path
// adds an orthonormal DCT-II over the filterbank axis and keeps every
// coefficient, so it stays exactly invertible.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "mff/common.hpp"

namespace mff {

enum class FeatureKind { mel, mfcc };

inline std::string_view to_string(FeatureKind k) { return k == FeatureKind::mel ? "mel" : "mfcc"; }

inline FeatureKind parse_feature_kind(std::string_view s) {
  if (s == "mel") return FeatureKind::mel;
  if (s == "mfcc") return FeatureKind::mfcc;
  throw ConfigError("unknown feature kind '" + std::string(s) + "' (expected mel or mfcc)");
}

inline constexpr unsigned kSampleRateHz = 16000;

struct WaveformClip {
  std::vector<double> samples;
  unsigned sample_rate_hz = kSampleRateHz;
  std::string source_id;
};

struct FeatureConfig {
  FeatureKind kind = FeatureKind::mel;
  double window_ms = 25.0;
  double hop_ms = 22.5;
  std::size_t n_mels = 128;
  std::size_t n_coeffs = 0;  // MFCC only
  std::size_t fft_size = 512;
  double log_floor = 1e-10;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;
  unsigned sample_rate_hz = kSampleRateHz;

  static FeatureConfig paper_mel() { return {}; }

  static FeatureConfig paper_mfcc() {
    FeatureConfig c;
    c.kind = FeatureKind::mfcc;
    c.hop_ms = 10.0;
    c.n_mels = 24;
    c.n_coeffs = 24;
    return c;
  }

  // Desk-scale inputs: 32x16 mel and 24x25 mfcc from non-overlapping
  // windows (1000 and 640 samples).
  static FeatureConfig tiny_mel() {
    FeatureConfig c;
    c.window_ms = c.hop_ms = 62.5;
    c.n_mels = 32;
    c.fft_size = 1024;
    return c;
  }

  static FeatureConfig tiny_mfcc() {
    FeatureConfig c = paper_mfcc();
    c.window_ms = c.hop_ms = 40.0;
    c.fft_size = 1024;
    return c;
  }

  std::size_t window_samples() const {
    return static_cast<std::size_t>(std::lround(window_ms * sample_rate_hz / 1000.0));
  }
  std::size_t hop_samples() const { return static_cast<std::size_t>(std::lround(hop_ms * sample_rate_hz / 1000.0)); }
  std::size_t rows() const { return kind == FeatureKind::mel ? n_mels : n_coeffs; }
  std::size_t frames() const { return (sample_rate_hz - window_samples()) / hop_samples() + 1; }

  void validate() const {
    if (sample_rate_hz == 0) throw ConfigError("sample rate must be positive");
    if (window_ms <= 0 || hop_ms <= 0) throw ConfigError("window and hop must be positive");
    if (hop_ms > window_ms) throw ConfigError("hop must not exceed the window");
    if (window_samples() > fft_size) throw ConfigError("fft_size smaller than the window");
    if (window_samples() > sample_rate_hz) throw ConfigError("window longer than a 1 s clip");
    if (n_mels == 0) throw ConfigError("n_mels must be positive");
    if (kind == FeatureKind::mfcc && (n_coeffs == 0 || n_coeffs > n_mels))
      throw ConfigError("n_coeffs must be in [1, n_mels]");
    if (!(fmin_hz >= 0 && fmin_hz < fmax_hz && fmax_hz <= sample_rate_hz / 2.0))
      throw ConfigError("band edges must satisfy 0 <= fmin < fmax <= sample_rate/2");
    if (!(log_floor > 0)) throw ConfigError("log_floor must be positive");
  }
};

/// rows = feature bins, cols = time frames, row-major.
struct SpectralFeature {
  std::size_t rows = 0;
  std::size_t cols = 0;
  FeatureKind kind = FeatureKind::mel;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

/// Zero-pads or truncates to exactly one second and checks the amplitude
/// contract (finite, |a| <= 1, mono 16 kHz).
inline WaveformClip fit_to_one_second(WaveformClip clip) {
  if (clip.sample_rate_hz != kSampleRateHz)
    throw InputError("clip '" + clip.source_id + "': sample rate " + std::to_string(clip.sample_rate_hz) +
                     " Hz, expected 16000 Hz");
  for (double a : clip.samples) {
    if (!std::isfinite(a)) throw InputError("clip '" + clip.source_id + "': non-finite sample");
    if (std::abs(a) > 1.0) throw InputError("clip '" + clip.source_id + "': amplitude outside [-1, 1]");
  }
  clip.samples.resize(clip.sample_rate_hz, 0.0);
  return clip;
}

inline std::size_t frame_count(std::size_t n, std::size_t window, std::size_t hop) {
  if (window == 0 || hop == 0) throw ConfigError("window and hop must be positive");
  if (window > n) throw ConfigError("window longer than clip");
  return (n - window) / hop + 1;
}

/// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

inline std::vector<std::vector<double>> frame_and_window(std::span<const double> samples, std::size_t window,
                                                         std::size_t hop) {
  const std::size_t f = frame_count(samples.size(), window, hop);
  const auto hann = hann_window(window);
  std::vector<std::vector<double>> frames(f, std::vector<double>(window));
  for (std::size_t t = 0; t < f; ++t)
    for (std::size_t i = 0; i < window; ++i) frames[t][i] = samples[t * hop + i] * hann[i];
  return frames;
}

inline std::vector<std::vector<double>> frame_and_window(const WaveformClip& clip, double window_ms, double hop_ms) {
  const auto to_samples = [&](double ms) {
    return static_cast<std::size_t>(std::lround(ms * clip.sample_rate_hz / 1000.0));
  };
  return frame_and_window(clip.samples, to_samples(window_ms), to_samples(hop_ms));
}

/// |FFT|^2 of a zero-padded frame; fft_size/2 + 1 bins.
inline std::vector<double> power_spectrum(std::span<const double> frame, std::size_t fft_size) {
  std::vector<double> padded(fft_size, 0.0);
  std::copy_n(frame.begin(), std::min(frame.size(), fft_size), padded.begin());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, padded);
  std::vector<double> power(fft_size / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(spectrum[k]);
  return power;
}

// Slaney mel scale (linear below 1 kHz, logarithmic above).
inline double hz_to_mel(double hz) {
  constexpr double f_sp = 200.0 / 3.0, min_log_hz = 1000.0, min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return hz < min_log_hz ? hz / f_sp : min_log_mel + std::log(hz / min_log_hz) / logstep;
}

inline double mel_to_hz(double mel) {
  constexpr double f_sp = 200.0 / 3.0, min_log_hz = 1000.0, min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return mel < min_log_mel ? mel * f_sp : min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

/// n_mels + 2 band edges in Hz, equally spaced on the mel scale. Filter m
/// spans edges[m]..edges[m + 2] and peaks at edges[m + 1].
inline std::vector<double> mel_band_edges(std::size_t n_mels, double fmin, double fmax) {
  std::vector<double> edges(n_mels + 2);
  const double lo = hz_to_mel(fmin), hi = hz_to_mel(fmax);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  return edges;
}

inline std::vector<double> mel_center_frequencies(std::size_t n_mels, double fmin, double fmax) {
  const auto edges = mel_band_edges(n_mels, fmin, fmax);
  return {edges.begin() + 1, edges.end() - 1};
}

struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t n_bins = 0;
  std::vector<double> weights;  // n_mels x n_bins
  std::vector<double> edges_hz;

  double at(std::size_t m, std::size_t k) const { return weights[m * n_bins + k]; }
};

/// Triangular filters with Slaney area normalization (2 / bandwidth).
inline MelFilterbank mel_filterbank(std::size_t n_mels, std::size_t fft_size, unsigned sample_rate, double fmin,
                                    double fmax) {
  if (n_mels == 0 || fft_size < 2) throw ConfigError("mel_filterbank: n_mels and fft_size must be positive");
  if (!(fmin >= 0 && fmin < fmax && fmax <= sample_rate / 2.0))
    throw ConfigError("mel_filterbank: need 0 <= fmin < fmax <= sample_rate/2");
  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.n_bins = fft_size / 2 + 1;
  fb.edges_hz = mel_band_edges(n_mels, fmin, fmax);
  fb.weights.assign(n_mels * fb.n_bins, 0.0);
  const auto& e = fb.edges_hz;
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lower = e[m], center = e[m + 1], upper = e[m + 2];
    const double norm = 2.0 / (upper - lower);
    bool any = false;
    for (std::size_t k = 0; k < fb.n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
      const double rising = (f - lower) / (center - lower);
      const double falling = (upper - f) / (upper - center);
      const double w = std::max(0.0, std::min(rising, falling));
      fb.weights[m * fb.n_bins + k] = w * norm;
      any = any || w > 0.0;
    }
    if (!any)
      throw ConfigError("mel_filterbank: filter " + std::to_string(m) +
                        " covers no FFT bin; too many mel bands for fft_size " + std::to_string(fft_size));
  }
  return fb;
}

/// Orthonormal DCT-II.
inline std::vector<double> dct2_orthonormal(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> y(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += x[i] * std::cos(std::numbers::pi * (static_cast<double>(i) + 0.5) * static_cast<double>(k) /
                           static_cast<double>(n));
    y[k] = s * std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
  }
  return y;
}

/// Inverse of dct2_orthonormal (orthonormal DCT-III).
inline std::vector<double> idct2_orthonormal(std::span<const double> y) {
  const std::size_t n = y.size();
  std::vector<double> x(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      s += y[k] * std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n)) *
           std::cos(std::numbers::pi * (static_cast<double>(i) + 0.5) * static_cast<double>(k) /
                    static_cast<double>(n));
    x[i] = s;
  }
  return x;
}

namespace detail {

inline SpectralFeature log_filterbank_energies(const WaveformClip& raw, const FeatureConfig& config) {
  config.validate();
  if (raw.sample_rate_hz != config.sample_rate_hz)
    throw InputError("clip sample rate does not match the feature config");
  const WaveformClip clip = fit_to_one_second(raw);
  const auto frames = frame_and_window(clip.samples, config.window_samples(), config.hop_samples());
  const auto fb = mel_filterbank(config.n_mels, config.fft_size, config.sample_rate_hz, config.fmin_hz,
                                 config.fmax_hz);
  SpectralFeature out;
  out.kind = FeatureKind::mel;
  out.rows = config.n_mels;
  out.cols = frames.size();
  out.values.assign(out.rows * out.cols, 0.0);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto power = power_spectrum(frames[t], config.fft_size);
    for (std::size_t m = 0; m < fb.n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < fb.n_bins; ++k) e += fb.at(m, k) * power[k];
      out.at(m, t) = std::log(std::max(e, config.log_floor));
    }
  }
  return out;
}

}  // namespace detail

inline SpectralFeature log_mel_spectrogram(const WaveformClip& clip, const FeatureConfig& config) {
  if (config.kind != FeatureKind::mel) throw ConfigError("log_mel_spectrogram requires a mel config");
  return detail::log_filterbank_energies(clip, config);
}

inline SpectralFeature mfcc(const WaveformClip& clip, const FeatureConfig& config) {
  if (config.kind != FeatureKind::mfcc) throw ConfigError("mfcc requires an mfcc config");
  const SpectralFeature logmel = detail::log_filterbank_energies(clip, config);
  SpectralFeature out;
  out.kind = FeatureKind::mfcc;
  out.rows = config.n_coeffs;
  out.cols = logmel.cols;
  out.values.assign(out.rows * out.cols, 0.0);
  std::vector<double> column(logmel.rows);
  for (std::size_t t = 0; t < logmel.cols; ++t) {
    for (std::size_t m = 0; m < logmel.rows; ++m) column[m] = logmel.at(m, t);
    const auto coeffs = dct2_orthonormal(column);
    for (std::size_t c = 0; c < out.rows; ++c) out.at(c, t) = coeffs[c];
  }
  return out;
}

inline SpectralFeature extract_features(const WaveformClip& clip, const FeatureConfig& config) {
  return config.kind == FeatureKind::mel ? log_mel_spectrogram(clip, config) : mfcc(clip, config);
}

}  // namespace mff
