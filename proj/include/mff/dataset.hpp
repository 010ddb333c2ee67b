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

// Scenario labeling, synthetic stand-ins for command audio and stereo road
// frames, JSON Lines manifests, stratified folds and input standardization.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mff/audio_features.hpp"
#include "mff/common.hpp"
#include "mff/image.hpp"
#include "mff/networks.hpp"
#include "mff/tensor.hpp"
#include "mff/wav.hpp"

namespace mff {

// ---------------------------------------------------------------------------
// Scenario labels

enum class Command { go, stop };
enum class Safety { safe, unsafe };

inline std::string_view to_string(Command c) { return c == Command::go ? "go" : "stop"; }
inline std::string_view to_string(Safety s) { return s == Safety::safe ? "safe" : "unsafe"; }

inline Command parse_command(std::string_view s) {
  if (s == "go") return Command::go;
  if (s == "stop") return Command::stop;
  throw ValidationError("unknown command '" + std::string(s) + "' (expected go or stop)");
}

inline Safety parse_safety(std::string_view s) {
  if (s == "safe") return Safety::safe;
  if (s == "unsafe") return Safety::unsafe;
  throw ValidationError("unknown label '" + std::string(s) + "' (expected safe or unsafe)");
}

inline int class_index(Safety s) { return s == Safety::safe ? kSafe : kUnsafe; }

/// Speed that falls between the declared buckets; no label is invented.
class OutOfBucketError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct ScenarioLabel {
  Command command = Command::go;
  double speed_kmh = 0.0;
  int scenario_id = 1;
  Safety safety = Safety::unsafe;
};

/// Speed buckets: 1 -> 0 km/h, 2 -> 5-10, 3 -> 15-20, 4 -> 25 and above.
inline int speed_bucket(double speed_kmh) {
  if (!std::isfinite(speed_kmh) || speed_kmh < 0) throw ValidationError("speed must be a non-negative number");
  if (speed_kmh == 0.0) return 1;
  if (speed_kmh >= 5.0 && speed_kmh <= 10.0) return 2;
  if (speed_kmh >= 15.0 && speed_kmh <= 20.0) return 3;
  if (speed_kmh >= 25.0) return 4;
  std::ostringstream os;
  os << "speed " << speed_kmh << " km/h lies outside every scenario bucket";
  throw OutOfBucketError(os.str());
}

/// The four driving scenarios:
///   go   + stationary (0 km/h)  -> 1, unsafe
///   go   + 5-10 km/h            -> 2, safe
///   stop + 15-20 km/h           -> 3, safe
///   stop + 25 km/h and above    -> 4, unsafe
/// Every other (command, speed) combination is rejected.
inline ScenarioLabel label_scenario(Command command, double speed_kmh) {
  const int bucket = speed_bucket(speed_kmh);
  ScenarioLabel label{command, speed_kmh, bucket, Safety::unsafe};
  const bool valid = command == Command::go ? bucket <= 2 : bucket >= 3;
  if (!valid) {
    std::ostringstream os;
    os << "command '" << to_string(command) << "' at " << speed_kmh << " km/h matches no scenario";
    throw OutOfBucketError(os.str());
  }
  label.safety = (bucket == 2 || bucket == 3) ? Safety::safe : Safety::unsafe;
  return label;
}

// ---------------------------------------------------------------------------
// Synthetic stand-ins

inline constexpr double kChirpLowHz = 300.0;
inline constexpr double kChirpHighHz = 900.0;
inline constexpr double kChirpAmplitude = 0.8;
inline constexpr double kAudioNoise = 0.05;

/// "go" is a 300 -> 900 Hz linear up-chirp, "stop" the matching down-chirp,
/// plus seeded uniform noise of amplitude 0.05. One second at 16 kHz.
inline WaveformClip synth_command_audio(Command command, std::uint64_t seed) {
  WaveformClip clip;
  clip.source_id = std::string("synth:") + std::string(to_string(command)) + ":" + std::to_string(seed);
  clip.samples.resize(kSampleRateHz);
  const double f0 = command == Command::go ? kChirpLowHz : kChirpHighHz;
  const double f1 = command == Command::go ? kChirpHighHz : kChirpLowHz;
  Rng rng(seed);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    const double t = static_cast<double>(i) / kSampleRateHz;
    const double phase = 2.0 * std::numbers::pi * (f0 * t + 0.5 * (f1 - f0) * t * t);
    const double v = kChirpAmplitude * std::sin(phase) + uniform(rng, -kAudioNoise, kAudioNoise);
    clip.samples[i] = std::clamp(v, -1.0, 1.0);
  }
  return clip;
}

inline constexpr std::size_t kPaperImageSide = 224;
inline constexpr std::size_t kParallaxPixels = 4;

/// Stripe period in pixels (at 224 px) for each speed bucket; strictly
/// decreasing with speed.
inline double stripe_period(int bucket) {
  static constexpr std::array<double, 4> periods{56.0, 40.0, 28.0, 20.0};
  return periods.at(static_cast<std::size_t>(bucket - 1));
}

/// Gray frame with horizontal stripes whose period encodes the speed bucket,
/// plus seeded pixel noise. The right frame is the left one shifted by four
/// pixels horizontally.
inline StereoView synth_stereo_frames(double speed_kmh, std::uint64_t seed, std::size_t side = kPaperImageSide) {
  const double period = stripe_period(speed_bucket(speed_kmh)) * static_cast<double>(side) / kPaperImageSide;
  const std::size_t wide = side + kParallaxPixels;
  Rng rng(seed);
  CameraFrame canvas(side, wide);
  for (std::size_t y = 0; y < side; ++y) {
    const double stripe = 60.0 * std::sin(2.0 * std::numbers::pi * static_cast<double>(y) / period);
    for (std::size_t x = 0; x < wide; ++x) {
      const double noise = uniform(rng, -20.0, 20.0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double tint = 4.0 * static_cast<double>(c);
        canvas.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp(128.0 + tint + stripe + noise, 0.0, 255.0)));
      }
    }
  }
  StereoView view{CameraFrame(side, side), CameraFrame(side, side)};
  for (std::size_t y = 0; y < side; ++y) {
    const auto row = canvas.rgb.begin() + static_cast<std::ptrdiff_t>(y * wide * 3);
    std::copy_n(row, side * 3, view.left.rgb.begin() + static_cast<std::ptrdiff_t>(y * side * 3));
    std::copy_n(row + static_cast<std::ptrdiff_t>(kParallaxPixels * 3), side * 3,
                view.right.rgb.begin() + static_cast<std::ptrdiff_t>(y * side * 3));
  }
  return view;
}

// ---------------------------------------------------------------------------
// Manifest

struct SynthAudio {
  Command command = Command::go;
  std::uint64_t seed = 0;
  bool operator==(const SynthAudio&) const = default;
};

struct SynthFrames {
  double speed_kmh = 0.0;
  std::uint64_t seed = 0;
  bool operator==(const SynthFrames&) const = default;
};

using AudioSource = std::variant<std::string, SynthAudio>;
using FrameSource = std::variant<std::string, SynthFrames>;

struct ManifestRecord {
  std::string id;
  AudioSource audio;
  FrameSource left;
  FrameSource right;
  ScenarioLabel label;
};

struct DatasetManifest {
  std::vector<ManifestRecord> entries;
  std::uint64_t seed = 0;
  std::filesystem::path base_dir;  // relative paths resolve against this

  std::size_t size() const { return entries.size(); }
  std::vector<int> class_labels() const {
    std::vector<int> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(class_index(e.label.safety));
    return out;
  }
};

inline nlohmann::ordered_json record_to_json(const ManifestRecord& r) {
  using nlohmann::ordered_json;
  const auto audio = std::visit(
      [](const auto& s) -> ordered_json {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, std::string>) {
          return s;
        } else {
          ordered_json synth;
          synth["command"] = to_string(s.command);
          synth["seed"] = s.seed;
          return {{"synth", synth}};
        }
      },
      r.audio);
  const auto frame = [](const FrameSource& src) {
    return std::visit(
        [](const auto& s) -> ordered_json {
          if constexpr (std::is_same_v<std::decay_t<decltype(s)>, std::string>) {
            return s;
          } else {
            ordered_json synth;
            synth["speed"] = s.speed_kmh;
            synth["seed"] = s.seed;
            return {{"synth", synth}};
          }
        },
        src);
  };
  ordered_json j;
  j["id"] = r.id;
  j["audio"] = audio;
  j["left"] = frame(r.left);
  j["right"] = frame(r.right);
  j["command"] = to_string(r.label.command);
  j["speed_kmh"] = r.label.speed_kmh;
  j["scenario"] = r.label.scenario_id;
  j["label"] = to_string(r.label.safety);
  return j;
}

/// Parses one manifest line and checks it against the scenario rules.
inline ManifestRecord record_from_json(const nlohmann::json& j) {
  const auto need = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw ValidationError(std::string("missing field '") + key + "'");
    return j.at(key);
  };
  ManifestRecord r;
  r.id = need("id").get<std::string>();
  const auto& audio = need("audio");
  if (audio.is_string()) {
    r.audio = audio.get<std::string>();
  } else if (audio.is_object() && audio.contains("synth")) {
    const auto& s = audio.at("synth");
    r.audio = SynthAudio{parse_command(s.at("command").get<std::string>()), s.at("seed").get<std::uint64_t>()};
  } else {
    throw ValidationError("field 'audio' must be a path or a synth object");
  }
  const auto frame = [&](const char* key) -> FrameSource {
    const auto& f = need(key);
    if (f.is_string()) return f.get<std::string>();
    if (f.is_object() && f.contains("synth")) {
      const auto& s = f.at("synth");
      return SynthFrames{s.at("speed").get<double>(), s.at("seed").get<std::uint64_t>()};
    }
    throw ValidationError(std::string("field '") + key + "' must be a path or a synth object");
  };
  r.left = frame("left");
  r.right = frame("right");
  const Command command = parse_command(need("command").get<std::string>());
  const double speed = need("speed_kmh").get<double>();
  r.label = label_scenario(command, speed);
  if (need("scenario").get<int>() != r.label.scenario_id)
    throw ValidationError("scenario " + std::to_string(j.at("scenario").get<int>()) + " disagrees with rules (expected " +
                          std::to_string(r.label.scenario_id) + ")");
  if (parse_safety(need("label").get<std::string>()) != r.label.safety)
    throw ValidationError("label '" + j.at("label").get<std::string>() + "' disagrees with rules (expected " +
                          std::string(to_string(r.label.safety)) + ")");
  return r;
}

inline std::string manifest_to_jsonl(const DatasetManifest& m) {
  std::string out;
  for (const auto& r : m.entries) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write manifest '" + path.string() + "'");
  out << manifest_to_jsonl(m);
}

/// Reads and validates a manifest. Every failing line is reported.
inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open manifest '" + path.string() + "'");
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::vector<std::string> problems;
  std::map<std::string, std::size_t> seen;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      ManifestRecord r = record_from_json(nlohmann::json::parse(line));
      if (const auto [it, fresh] = seen.emplace(r.id, lineno); !fresh)
        throw ValidationError("duplicate id '" + r.id + "' (first seen on line " + std::to_string(it->second) + ")");
      m.entries.push_back(std::move(r));
    } catch (const std::exception& e) {
      problems.push_back(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "manifest validation failed:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  return m;
}

enum class BuildMode { synthetic, ingest };

inline BuildMode parse_build_mode(std::string_view s) {
  if (s == "synthetic") return BuildMode::synthetic;
  if (s == "ingest") return BuildMode::ingest;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected synthetic or ingest)");
}

struct BuildOptions {
  std::size_t n_pairs = 4000;
  double safe_fraction = 0.5;
  std::uint64_t seed = 0;
  BuildMode mode = BuildMode::synthetic;
  std::filesystem::path source_listing;  // ingest mode
  bool skip_invalid = false;              // ingest mode: drop bad records instead of failing
};

struct BuildResult {
  DatasetManifest manifest;
  std::vector<std::string> rejected;  // per-record diagnostics
};

namespace detail {

inline double round_tenth(double v) { return std::round(v * 10.0) / 10.0; }

inline ScenarioLabel sample_scenario(Safety safety, Rng& rng) {
  const bool first = uniform01(rng) < 0.5;
  switch (safety == Safety::safe ? (first ? 2 : 3) : (first ? 1 : 4)) {
    case 1: return label_scenario(Command::go, 0.0);
    case 2: return label_scenario(Command::go, round_tenth(uniform(rng, 5.0, 10.0)));
    case 3: return label_scenario(Command::stop, round_tenth(uniform(rng, 15.0, 20.0)));
    default: return label_scenario(Command::stop, round_tenth(uniform(rng, 25.0, 40.0)));
  }
}

inline std::string pair_id(std::string_view prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return std::string(prefix) + buf;
}

inline void check_exists(const std::filesystem::path& base, const std::string& p, const char* what) {
  const std::filesystem::path full = std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base / p;
  if (!std::filesystem::exists(full)) throw ValidationError(std::string(what) + " file '" + p + "' not found");
}

}  // namespace detail

inline std::pair<std::size_t, std::size_t> class_counts(std::size_t n, double safe_fraction) {
  const auto safe = static_cast<std::size_t>(std::llround(static_cast<double>(n) * safe_fraction));
  return {safe, n - safe};
}

/// Builds a seeded manifest. Synthetic mode draws scenarios per class; ingest
/// mode reads a JSON Lines listing of real files ({audio, left, right,
/// command, speed_kmh[, id]}), validates every record and samples the
/// requested class balance from the valid ones.
inline BuildResult build_manifest(const BuildOptions& opt) {
  if (opt.n_pairs == 0) throw ConfigError("n_pairs must be positive");
  if (!(opt.safe_fraction >= 0.0 && opt.safe_fraction <= 1.0)) throw ConfigError("balance must be within [0, 1]");
  const auto [n_safe, n_unsafe] = class_counts(opt.n_pairs, opt.safe_fraction);
  BuildResult result;
  result.manifest.seed = opt.seed;
  Rng rng(opt.seed);

  if (opt.mode == BuildMode::synthetic) {
    std::vector<Safety> classes(n_safe, Safety::safe);
    classes.insert(classes.end(), n_unsafe, Safety::unsafe);
    shuffle(classes.begin(), classes.end(), rng);
    for (std::size_t i = 0; i < classes.size(); ++i) {
      Rng record_rng(derive_seed(opt.seed, i));
      ManifestRecord r;
      r.id = detail::pair_id("pair-", i);
      r.label = detail::sample_scenario(classes[i], record_rng);
      r.audio = SynthAudio{r.label.command, record_rng()};
      const SynthFrames frames{r.label.speed_kmh, record_rng()};
      r.left = frames;
      r.right = frames;
      result.manifest.entries.push_back(std::move(r));
    }
    return result;
  }

  std::ifstream in(opt.source_listing, std::ios::binary);
  if (!in) throw InputError("cannot open source listing '" + opt.source_listing.string() + "'");
  const auto base = opt.source_listing.parent_path();
  result.manifest.base_dir = base;
  std::vector<ManifestRecord> pool[2];
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestRecord r;
      r.id = j.contains("id") ? j.at("id").get<std::string>() : detail::pair_id("ingest-", lineno);
      r.audio = j.at("audio").get<std::string>();
      r.left = j.at("left").get<std::string>();
      r.right = j.at("right").get<std::string>();
      r.label = label_scenario(parse_command(j.at("command").get<std::string>()), j.at("speed_kmh").get<double>());
      if (j.contains("scenario") && j.at("scenario").get<int>() != r.label.scenario_id)
        throw ValidationError("scenario disagrees with rules");
      if (j.contains("label") && parse_safety(j.at("label").get<std::string>()) != r.label.safety)
        throw ValidationError("label disagrees with rules");
      detail::check_exists(base, std::get<std::string>(r.audio), "audio");
      detail::check_exists(base, std::get<std::string>(r.left), "left image");
      detail::check_exists(base, std::get<std::string>(r.right), "right image");
      pool[class_index(r.label.safety)].push_back(std::move(r));
    } catch (const std::exception& e) {
      result.rejected.push_back(opt.source_listing.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!result.rejected.empty() && !opt.skip_invalid) {
    std::string msg = "ingest validation failed:";
    for (const auto& p : result.rejected) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  if (pool[kSafe].size() < n_safe || pool[kUnsafe].size() < n_unsafe)
    throw ValidationError("not enough valid records for the requested size/balance: have " +
                          std::to_string(pool[kSafe].size()) + " safe and " + std::to_string(pool[kUnsafe].size()) +
                          " unsafe");
  for (auto& p : pool) shuffle(p.begin(), p.end(), rng);
  auto& entries = result.manifest.entries;
  entries.assign(pool[kSafe].begin(), pool[kSafe].begin() + static_cast<std::ptrdiff_t>(n_safe));
  entries.insert(entries.end(), pool[kUnsafe].begin(), pool[kUnsafe].begin() + static_cast<std::ptrdiff_t>(n_unsafe));
  shuffle(entries.begin(), entries.end(), rng);
  std::map<std::string, int> seen;
  for (const auto& e : entries)
    if (seen[e.id]++) throw ValidationError("duplicate id '" + e.id + "' in source listing");
  return result;
}

// ---------------------------------------------------------------------------
// Folds

struct FoldSplit {
  std::vector<std::vector<std::size_t>> folds;

  std::size_t k() const { return folds.size(); }
  /// Every index outside fold f, ascending.
  std::vector<std::size_t> complement(std::size_t f) const {
    std::vector<std::size_t> out;
    for (std::size_t g = 0; g < folds.size(); ++g)
      if (g != f) out.insert(out.end(), folds[g].begin(), folds[g].end());
    std::sort(out.begin(), out.end());
    return out;
  }
};

/// Label-stratified k-fold partition of `items` (indices into `labels`).
/// Classes are shuffled independently and dealt round-robin, so fold sizes
/// and per-class counts each differ by at most one.
inline FoldSplit split_kfold_indices(std::span<const std::size_t> items, std::span<const int> labels, std::size_t k,
                                     std::uint64_t seed) {
  if (k < 2) throw ConfigError("k must be at least 2");
  if (k > items.size())
    throw ConfigError("k = " + std::to_string(k) + " exceeds the number of samples (" + std::to_string(items.size()) + ")");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i : items) by_class[labels[i]].push_back(i);
  Rng rng(seed);
  FoldSplit split;
  split.folds.resize(k);
  std::size_t position = 0;
  for (auto& [label, members] : by_class) {
    shuffle(members.begin(), members.end(), rng);
    for (std::size_t i : members) split.folds[position++ % k].push_back(i);
  }
  for (auto& f : split.folds) std::sort(f.begin(), f.end());
  return split;
}

inline FoldSplit split_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> all(labels.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return split_kfold_indices(all, labels, k, seed);
}

inline FoldSplit split_kfold(const DatasetManifest& manifest, std::size_t k, std::uint64_t seed) {
  const auto labels = manifest.class_labels();
  return split_kfold(labels, k, seed);
}

/// Stratified carve-out of roughly `fraction` of `items` for validation.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    std::span<const std::size_t> items, std::span<const int> labels, double fraction, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i : items) by_class[labels[i]].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> train, val;
  for (auto& [label, members] : by_class) {
    shuffle(members.begin(), members.end(), rng);
    auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    if (n_val == 0 && members.size() > 1 && fraction > 0) n_val = 1;
    val.insert(val.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.insert(train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_val), members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {train, val};
}

// ---------------------------------------------------------------------------
// Materialized samples

struct PairedSample {
  std::string id;
  SpectralFeature feature;
  StereoView view;
  ScenarioLabel label;
};

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

/// Turns a manifest record into model-ready inputs for `cfg`: features for
/// cfg's feature kind and frames at cfg's image size.
inline PairedSample load_sample(const ManifestRecord& r, const ModelConfig& cfg, const std::filesystem::path& base) {
  PairedSample s;
  s.id = r.id;
  s.label = r.label;
  const WaveformClip clip = std::visit(
      [&](const auto& src) -> WaveformClip {
        if constexpr (std::is_same_v<std::decay_t<decltype(src)>, std::string>)
          return read_wav(resolve(base, src).string());
        else
          return synth_command_audio(src.command, src.seed);
      },
      r.audio);
  s.feature = extract_features(clip, cfg.feature_config());

  const std::size_t side = cfg.image_size();
  std::optional<std::pair<SynthFrames, StereoView>> cached;
  const auto frame = [&](const FrameSource& src, bool right) -> CameraFrame {
    if (const auto* path = std::get_if<std::string>(&src)) {
      CameraFrame f = load_camera_frame(resolve(base, *path).string(), kPaperImageSide, kPaperImageSide);
      return resize_bilinear(f, side, side);
    }
    const auto& synth = std::get<SynthFrames>(src);
    if (!cached || !(cached->first == synth)) cached.emplace(synth, synth_stereo_frames(synth.speed_kmh, synth.seed));
    return resize_bilinear(right ? cached->second.right : cached->second.left, side, side);
  };
  s.view.left = frame(r.left, false);
  s.view.right = frame(r.right, true);
  return s;
}

inline std::vector<PairedSample> load_samples(const DatasetManifest& m, const ModelConfig& cfg) {
  std::vector<PairedSample> out;
  out.reserve(m.entries.size());
  for (const auto& r : m.entries) {
    try {
      out.push_back(load_sample(r, cfg, m.base_dir));
    } catch (const std::exception& e) {
      throw InputError("record '" + r.id + "': " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Standardization

inline constexpr double kStdFloor = 1e-6;

struct StandardizerStats {
  std::vector<double> image_mean, image_std;  // per RGB channel
  std::vector<double> audio_mean, audio_std;  // per feature bin
};

namespace detail {

struct Moments {
  std::vector<double> sum, sum_sq;
  std::vector<std::size_t> count;
  explicit Moments(std::size_t channels) : sum(channels), sum_sq(channels), count(channels) {}
  void add(std::size_t ch, double v) {
    sum[ch] += v;
    sum_sq[ch] += v * v;
    ++count[ch];
  }
};

// Two-pass (mean first) keeps the variance accurate for large offsets.
inline void finish(const std::vector<double>& mean_src, const std::vector<double>& centered_sq,
                   const std::vector<std::size_t>& count, std::vector<double>& mean, std::vector<double>& stddev,
                   std::string_view what) {
  mean = mean_src;
  stddev.resize(mean.size());
  for (std::size_t c = 0; c < mean.size(); ++c) {
    stddev[c] = std::sqrt(centered_sq[c] / static_cast<double>(count[c]));
    if (!(stddev[c] >= kStdFloor)) {
      warn(std::string(what) + " channel " + std::to_string(c) + " has (near) zero variance; std floored at 1e-6");
      stddev[c] = kStdFloor;
    }
  }
}

}  // namespace detail

/// Fits per-channel image and per-bin audio statistics on `train` only.
inline StandardizerStats fit_standardizer(std::span<const PairedSample> samples, std::span<const std::size_t> train) {
  if (train.size() < 2) throw ConfigError("fit_standardizer needs at least two training samples");
  const std::size_t bins = samples[train[0]].feature.rows;
  std::vector<double> img_sum(3, 0.0), img_sq(3, 0.0), aud_sum(bins, 0.0), aud_sq(bins, 0.0);
  std::vector<std::size_t> img_n(3, 0), aud_n(bins, 0);
  for (std::size_t i : train) {
    const auto& s = samples[i];
    if (s.feature.rows != bins) throw ConfigError("inconsistent feature shapes in training set");
    for (const CameraFrame* f : {&s.view.left, &s.view.right})
      for (std::size_t p = 0; p < f->rgb.size(); ++p) {
        img_sum[p % 3] += f->rgb[p];
        ++img_n[p % 3];
      }
    for (std::size_t r = 0; r < bins; ++r)
      for (std::size_t c = 0; c < s.feature.cols; ++c) {
        aud_sum[r] += s.feature.at(r, c);
        ++aud_n[r];
      }
  }
  std::vector<double> img_mean(3), aud_mean(bins);
  for (std::size_t c = 0; c < 3; ++c) img_mean[c] = img_sum[c] / static_cast<double>(img_n[c]);
  for (std::size_t r = 0; r < bins; ++r) aud_mean[r] = aud_sum[r] / static_cast<double>(aud_n[r]);
  for (std::size_t i : train) {
    const auto& s = samples[i];
    for (const CameraFrame* f : {&s.view.left, &s.view.right})
      for (std::size_t p = 0; p < f->rgb.size(); ++p) {
        const double d = f->rgb[p] - img_mean[p % 3];
        img_sq[p % 3] += d * d;
      }
    for (std::size_t r = 0; r < bins; ++r)
      for (std::size_t c = 0; c < s.feature.cols; ++c) {
        const double d = s.feature.at(r, c) - aud_mean[r];
        aud_sq[r] += d * d;
      }
  }
  StandardizerStats st;
  detail::finish(img_mean, img_sq, img_n, st.image_mean, st.image_std, "image");
  detail::finish(aud_mean, aud_sq, aud_n, st.audio_mean, st.audio_std, "audio");
  return st;
}

/// Standardized copy of one sample's inputs.
template <class T>
struct StandardizedSample {
  std::vector<T> audio;  // rows x frames
  std::vector<T> left;   // H x W x 3
  std::vector<T> right;
};

template <class T>
StandardizedSample<T> apply_standardizer(const PairedSample& s, const StandardizerStats& st) {
  if (s.feature.rows != st.audio_mean.size()) throw ConfigError("feature bins do not match standardizer");
  StandardizedSample<T> out;
  out.audio.resize(s.feature.values.size());
  for (std::size_t r = 0; r < s.feature.rows; ++r)
    for (std::size_t c = 0; c < s.feature.cols; ++c)
      out.audio[r * s.feature.cols + c] =
          static_cast<T>((s.feature.at(r, c) - st.audio_mean[r]) / st.audio_std[r]);
  const auto image = [&](const CameraFrame& f, std::vector<T>& dst) {
    dst.resize(f.rgb.size());
    for (std::size_t p = 0; p < f.rgb.size(); ++p)
      dst[p] = static_cast<T>((f.rgb[p] - st.image_mean[p % 3]) / st.image_std[p % 3]);
  };
  image(s.view.left, out.left);
  image(s.view.right, out.right);
  return out;
}

/// Samples plus the statistics that standardize them. Batches are
/// standardized on the fly, so only the raw 8-bit frames stay resident.
template <class T>
struct PreparedSet {
  std::span<const PairedSample> samples;
  StandardizerStats stats;
  Shape audio_shape;  // {rows, frames, 1}
  Shape image_shape;  // {S, S, 3}
  std::vector<int> labels;

  std::size_t size() const { return samples.size(); }

  Batch<T> batch(std::span<const std::size_t> indices) const {
    const std::size_t n = indices.size();
    Batch<T> b;
    Shape as{n}, is{n};
    as.insert(as.end(), audio_shape.begin(), audio_shape.end());
    is.insert(is.end(), image_shape.begin(), image_shape.end());
    b.audio = Tensor<T>(as);
    b.left = Tensor<T>(is);
    b.right = Tensor<T>(is);
    const std::size_t a = element_count(audio_shape), im = element_count(image_shape);
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = apply_standardizer<T>(samples[indices[i]], stats);
      std::copy_n(s.audio.begin(), a, b.audio.ptr() + i * a);
      std::copy_n(s.left.begin(), im, b.left.ptr() + i * im);
      std::copy_n(s.right.begin(), im, b.right.ptr() + i * im);
      b.labels.push_back(labels[indices[i]]);
    }
    return b;
  }
};

/// Checks that every sample fits `cfg` and binds it to `stats`.
template <class T>
PreparedSet<T> prepare(std::span<const PairedSample> samples, const StandardizerStats& stats, const ModelConfig& cfg) {
  PreparedSet<T> set{samples, stats, cfg.audio_shape(), cfg.image_shape(), {}};
  for (const auto& s : samples) {
    if (s.feature.rows != set.audio_shape[0] || s.feature.cols != set.audio_shape[1] ||
        s.feature.kind != cfg.feature_kind)
      throw ConfigError("sample '" + s.id + "' features do not match the model configuration");
    if (!std::all_of(s.feature.values.begin(), s.feature.values.end(), [](double v) { return std::isfinite(v); }))
      throw InputError("sample '" + s.id + "' has non-finite features");
    for (const CameraFrame* f : {&s.view.left, &s.view.right})
      if (f->height != set.image_shape[0] || f->width != set.image_shape[1])
        throw ConfigError("sample '" + s.id + "' frames do not match the model image size");
    set.labels.push_back(class_index(s.label.safety));
  }
  return set;
}

}  // namespace mff
