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

// Subcommand implementations behind the mff tool. Each writes a frozen
// config.json next to its outputs; file contents never carry timestamps, so
// reruns with the same flags reproduce the same bytes.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mff/calibration.hpp"
#include "mff/checkpoint.hpp"
#include "mff/common.hpp"
#include "mff/dataset.hpp"
#include "mff/mc_dropout.hpp"
#include "mff/plot.hpp"
#include "mff/training.hpp"

namespace mff::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Explicit flag, else MFF_SEED, else 0.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("MFF_SEED"); env && *env) {
    const std::string_view text(env);
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec == std::errc() && end == text.data() + text.size()) return v;
    throw ConfigError(std::string("MFF_SEED='") + env + "' is not a non-negative integer");
  }
  return 0;
}

inline void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create directory '" + dir.string() + "': " + ec.message());
}

// ---------------------------------------------------------------------------

struct BuildDatasetArgs {
  fs::path out;
  std::size_t n = 4000;
  double balance = 0.5;
  std::optional<std::uint64_t> seed;
  std::string mode = "synthetic";
  fs::path source;
  bool skip_invalid = false;
};

inline int cmd_build_dataset(const BuildDatasetArgs& a) {
  BuildOptions opt;
  opt.n_pairs = a.n;
  opt.safe_fraction = a.balance;
  opt.seed = resolve_seed(a.seed);
  opt.mode = parse_build_mode(a.mode);
  opt.source_listing = a.source;
  opt.skip_invalid = a.skip_invalid;
  if (opt.mode == BuildMode::ingest && a.source.empty()) throw ConfigError("--mode ingest requires --source");
  const BuildResult res = build_manifest(opt);
  for (const auto& r : res.rejected) warn("skipped " + r);
  if (a.out.has_parent_path()) ensure_dir(a.out.parent_path());
  write_manifest(a.out, res.manifest);
  std::cerr << "wrote " << res.manifest.size() << " pairs to " << a.out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ModelArgs {
  std::string fusion = "early";
  std::string features = "mel";
  std::string scale = "paper";
  std::optional<double> dropout;  // default follows the scale
  bool separate_towers = false;

  ModelConfig config() const {
    ModelConfig c;
    c.fusion = parse_fusion(fusion);
    c.feature_kind = parse_feature_kind(features);
    c.scale = parse_scale(scale);
    c.dropout_rate = dropout.value_or(c.scale == Scale::tiny ? kTinyDropoutRate : kPaperDropoutRate);
    c.share_tower_weights = !separate_towers;
    c.validate();
    return c;
  }
};

struct HyperArgs {
  std::optional<double> learning_rate;
  std::optional<std::size_t> batch_size, max_epochs, patience;

  Hyperparams resolve(Scale scale) const {
    Hyperparams hp = Hyperparams::for_scale(scale);
    if (learning_rate) hp.learning_rate = *learning_rate;
    if (batch_size) hp.batch_size = *batch_size;
    if (max_epochs) hp.max_epochs = *max_epochs;
    if (patience) hp.patience = *patience;
    hp.validate();
    return hp;
  }
};

struct TrainArgs {
  fs::path manifest;
  fs::path out;
  ModelArgs model;
  HyperArgs hyper;
  std::size_t folds = 10;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  bool verbose = false;
};

inline std::string fold_name(std::size_t f) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "fold_%02zu", f);
  return buf;
}

inline nlohmann::ordered_json summary_to_json(const MetricSummary& s) {
  nlohmann::ordered_json j;
  for (std::size_t i = 0; i < s.names.size(); ++i) j[s.names[i]] = {{"mean", s.mean[i]}, {"std", s.stddev[i]}};
  return j;
}

inline int cmd_train(const TrainArgs& a) {
  const ModelConfig cfg = a.model.config();
  const Hyperparams hp = a.hyper.resolve(cfg.scale);
  const std::uint64_t seed = resolve_seed(a.seed);
  if (a.jobs == 0) throw ConfigError("--jobs must be positive");
  const DatasetManifest manifest = read_manifest(a.manifest);
  if (a.folds < 2 || a.folds > manifest.size())
    throw ConfigError("--folds must lie in [2, " + std::to_string(manifest.size()) + "]");
  const auto samples = load_samples(manifest, cfg);

  ensure_dir(a.out);
  nlohmann::ordered_json config;
  config["subcommand"] = "train";
  config["manifest"] = a.manifest.string();
  config["model"] = config_to_json(cfg);
  config["hyperparams"] = hyperparams_to_json(hp);
  config["folds"] = a.folds;
  config["seed"] = seed;
  config["n_samples"] = samples.size();
  write_json(a.out / "config.json", config);

  FoldCallback progress;
  if (a.verbose)
    progress = [](std::size_t f, const EpochRecord& r) {
      std::fprintf(stderr, "fold %zu epoch %zu train_loss %.4f val_loss %.4f val_acc %.4f\n", f, r.epoch,
                   r.train_loss, r.val_loss, r.val_acc);
    };
  const CrossValidation cv = cross_validate(cfg, samples, a.folds, hp, seed, a.jobs, progress);

  for (std::size_t f = 0; f < cv.folds.size(); ++f) {
    const auto& fold = cv.folds[f];
    const fs::path dir = a.out / fold_name(f);
    ensure_dir(dir);
    save_checkpoint(dir / "checkpoint.bin", fold.artifacts.checkpoint);
    write_text_file(dir / "history.csv", fold.artifacts.history.to_csv());
    nlohmann::ordered_json m = metrics_to_json(fold.eval.metrics);
    m["best_epoch"] = fold.artifacts.history.best_epoch;
    m["n_train"] = fold.train.size();
    m["n_val"] = fold.val.size();
    m["n_test"] = fold.test.size();
    write_json(dir / "metrics.json", m);
    write_predictions(dir / "predictions.jsonl", fold.eval.records);
    std::fprintf(stderr, "fold %zu: accuracy %.4f (best epoch %zu)\n", f, fold.eval.metrics.accuracy,
                 fold.artifacts.history.best_epoch);
  }

  const auto pooled = cv.pooled_records();
  write_predictions(a.out / "predictions.jsonl", pooled);
  nlohmann::ordered_json summary;
  summary["folds"] = a.folds;
  summary["cv"] = summary_to_json(cv.summary);
  summary["pooled"] = metrics_to_json(metrics_of(pooled, true));
  const auto cal = ece(std::span<const PredictionRecord>(pooled), 10);
  summary["pooled"]["ece"] = cal.ece;
  summary["pooled"]["ece_percent"] = cal.ece_percent;
  write_json(a.out / "summary.json", summary);
  write_json(a.out / "metrics.json", summary["pooled"]);
  std::fprintf(stderr, "cv accuracy %.4f +- %.4f\n", cv.summary.mean[0], cv.summary.stddev[0]);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  fs::path checkpoint, manifest, out;
};

inline int cmd_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const DatasetManifest manifest = read_manifest(a.manifest);
  const auto samples = load_samples(manifest, ck.config);
  const EvalResult res = evaluate(ck, samples);
  ensure_dir(a.out);
  nlohmann::ordered_json config;
  config["subcommand"] = "eval";
  config["checkpoint"] = a.checkpoint.string();
  config["manifest"] = a.manifest.string();
  config["model"] = config_to_json(ck.config);
  write_json(a.out / "config.json", config);
  write_json(a.out / "metrics.json", metrics_to_json(res.metrics));
  write_predictions(a.out / "predictions.jsonl", res.records);
  std::fprintf(stderr, "accuracy %.4f on %zu samples\n", res.metrics.accuracy, res.metrics.n);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  fs::path predictions, out;
  std::size_t bins = 10;
  std::string title = "model";
};

inline int cmd_calibrate(const CalibrateArgs& a) {
  const auto records = read_predictions(a.predictions);
  const CalibrationReport rep = ece(std::span<const PredictionRecord>(records), a.bins);
  const auto s = scored(records);
  ensure_dir(a.out);
  nlohmann::ordered_json config;
  config["subcommand"] = "calibrate";
  config["predictions"] = a.predictions.string();
  config["bins"] = a.bins;
  write_json(a.out / "config.json", config);
  write_json(a.out / "report.json", report_to_json(rep));
  write_text_file(a.out / "bins.csv", bins_to_csv(rep));
  write_text_file(a.out / "reliability.svg", reliability_diagram_svg(rep, "Reliability diagram: " + a.title));
  write_text_file(a.out / "confidence_hist.svg",
                  confidence_histogram_svg(confidence_histogram(s, a.bins), "Confidence histogram: " + a.title));
  std::fprintf(stderr, "ECE %.4f (%.2f%%) over %zu predictions\n", rep.ece, rep.ece_percent, rep.n);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct McArgs {
  fs::path checkpoint, manifest, out;
  std::size_t passes = 100;
  std::size_t hist_bins = 10;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
};

inline int cmd_mc(const McArgs& a) {
  const std::uint64_t seed = resolve_seed(a.seed);
  if (a.jobs == 0) throw ConfigError("--jobs must be positive");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const DatasetManifest manifest = read_manifest(a.manifest);
  const auto samples = load_samples(manifest, ck.config);
  const MCDropoutReport rep = mc_evaluate(ck, samples, a.passes, seed, a.jobs);
  const AccuracyHistogram hist = accuracy_histogram(rep.per_pass_accuracy, a.hist_bins);
  ensure_dir(a.out);
  nlohmann::ordered_json config;
  config["subcommand"] = "mc";
  config["checkpoint"] = a.checkpoint.string();
  config["manifest"] = a.manifest.string();
  config["passes"] = a.passes;
  config["seed"] = seed;
  write_json(a.out / "config.json", config);
  write_json(a.out / "mc_report.json", mc_report_to_json(rep));
  write_text_file(a.out / "mc_hist.csv", histogram_to_csv(hist));
  write_text_file(a.out / "mc_hist.svg",
                  mc_histogram_svg(hist, rep.ensemble_accuracy, "MC dropout, T = " + std::to_string(rep.T)));
  std::fprintf(stderr, "ensemble accuracy %.4f, mean pass accuracy %.4f\n", rep.ensemble_accuracy,
               rep.mean_pass_accuracy());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  fs::path runs, out;
};

struct ReportRow {
  std::string fusion_label, feature_label;
  bool present = false;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0, ece_percent = 0;
};

inline const std::array<std::string, 7> kReportColumns = {"Fusion Method", "Features", "Accuracy", "Precision",
                                                           "Recall",        "F1",       "ECE"};

/// One row per fusion x feature cell, in table order. Metrics are the CV
/// means (macro precision/recall/F1); ECE is over pooled out-of-fold
/// predictions.
inline std::vector<ReportRow> collect_report(const fs::path& runs) {
  if (!fs::is_directory(runs)) throw InputError("runs directory '" + runs.string() + "' not found");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(runs))
    if (e.is_directory() && fs::exists(e.path() / "config.json")) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());

  std::vector<ReportRow> rows;
  for (const char* fusion : {"early", "late"})
    for (const char* feat : {"mel", "mfcc"}) {
      ReportRow row;
      row.fusion_label = std::string(fusion) == "early" ? "Early Fusion" : "Late Fusion";
      row.feature_label = std::string(feat) == "mel" ? "Mel-spectrogram" : "MFCC";
      for (const auto& d : dirs) {
        const auto cfg = read_json(d / "config.json");
        if (cfg.value("subcommand", "") != "train") continue;
        const auto& model = cfg.at("model");
        if (model.at("fusion") != fusion || model.at("features") != feat) continue;
        if (!fs::exists(d / "summary.json")) {
          warn("run '" + d.string() + "' has no summary.json; skipped");
          continue;
        }
        if (row.present) {
          warn("several runs for " + std::string(fusion) + "/" + feat + "; using the first");
          continue;
        }
        const auto summary = read_json(d / "summary.json");
        const auto& cv = summary.at("cv");
        row.present = true;
        row.accuracy = cv.at("accuracy").at("mean").get<double>();
        row.precision = cv.at("precision_macro").at("mean").get<double>();
        row.recall = cv.at("recall_macro").at("mean").get<double>();
        row.f1 = cv.at("f1_macro").at("mean").get<double>();
        row.ece_percent = summary.at("pooled").at("ece_percent").get<double>();
      }
      if (!row.present) warn("no completed run for " + std::string(fusion) + "/" + feat + "; row marked absent");
      rows.push_back(row);
    }
  return rows;
}

inline std::vector<std::string> report_cells(const ReportRow& r) {
  if (!r.present) return {r.fusion_label, r.feature_label, "absent", "absent", "absent", "absent", "absent"};
  const auto pct = [](double v) { return svg::fmt("%.2f", v * 100.0); };
  return {r.fusion_label, r.feature_label, pct(r.accuracy), pct(r.precision), pct(r.recall), pct(r.f1),
          svg::fmt("%.2f", r.ece_percent)};
}

inline std::string report_markdown(const std::vector<ReportRow>& rows) {
  std::string out = "|";
  for (const auto& c : kReportColumns) out += " " + c + " |";
  out += "\n|";
  for (std::size_t i = 0; i < kReportColumns.size(); ++i) out += "---|";
  out += "\n";
  for (const auto& r : rows) {
    const auto cells = report_cells(r);
    out += "|";
    for (std::size_t i = 0; i < cells.size(); ++i)
      out += " " + cells[i] + (r.present && i >= 2 && i <= 5 ? "%" : "") + " |";
    out += "\n";
  }
  return out;
}

inline std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out;
  for (std::size_t i = 0; i < kReportColumns.size(); ++i) out += (i ? "," : "") + kReportColumns[i];
  out += "\n";
  for (const auto& r : rows) {
    const auto cells = report_cells(r);
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
    out += "\n";
  }
  return out;
}

inline int cmd_report(const ReportArgs& a) {
  const auto rows = collect_report(a.runs);
  ensure_dir(a.out);
  write_text_file(a.out / "table.md", report_markdown(rows));
  write_text_file(a.out / "table.csv", report_csv(rows));
  std::cout << report_markdown(rows);
  return kExitOk;
}

}  // namespace mff::cli
