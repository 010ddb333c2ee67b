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
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mff/checkpoint.hpp"
#include "mff/common.hpp"
#include "mff/dataset.hpp"
#include "mff/layers.hpp"
#include "mff/loss.hpp"
#include "mff/networks.hpp"
#include "mff/optimizer.hpp"

namespace mff {

struct Hyperparams {
  std::size_t batch_size = 64;
  double learning_rate = 0.01;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  double val_fraction = 0.1;  // stratified carve-out of the training folds

  /// Tiny runs default to a gentler step size.
  static Hyperparams for_scale(Scale s) {
    Hyperparams hp;
    if (s == Scale::tiny) hp.learning_rate = 1e-3;
    return hp;
  }

  void validate() const {
    if (batch_size == 0 || max_epochs == 0 || patience == 0) throw ConfigError("batch_size, max_epochs and patience must be positive");
    if (!(learning_rate > 0) || !(epsilon > 0)) throw ConfigError("learning_rate and epsilon must be positive");
    if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in (0, 1)");
    if (patience >= max_epochs) throw ConfigError("patience must be smaller than max_epochs");
    if (!(val_fraction > 0 && val_fraction < 1)) throw ConfigError("val_fraction must lie in (0, 1)");
  }

  AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }
};

inline nlohmann::ordered_json hyperparams_to_json(const Hyperparams& h) {
  nlohmann::ordered_json j;
  j["batch_size"] = h.batch_size;
  j["learning_rate"] = h.learning_rate;
  j["max_epochs"] = h.max_epochs;
  j["patience"] = h.patience;
  j["optimizer"] = "adam";
  j["beta1"] = h.beta1;
  j["beta2"] = h.beta2;
  j["epsilon"] = h.epsilon;
  j["val_fraction"] = h.val_fraction;
  j["loss"] = "cross_entropy";
  return j;
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double val_acc = 0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 before the first epoch
  bool stopped_early = false;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,train_loss,val_loss,val_acc\n";
    for (const auto& e : epochs) os << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_acc << '\n';
    return os.str();
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["best_epoch"] = best_epoch;
    j["epochs_run"] = epochs.size();
    j["stopped_early"] = stopped_early;
    return j;
  }
};

/// Stops after `patience` consecutive epochs without a strict improvement in
/// validation loss.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  /// Records one epoch; returns true when it is the new best.
  bool observe(double val_loss) {
    ++epoch_;
    if (val_loss < best_loss_) {
      best_loss_ = val_loss;
      best_epoch_ = epoch_;
      wait_ = 0;
      return true;
    }
    ++wait_;
    return false;
  }

  bool should_stop() const { return wait_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t wait_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------
// Metrics

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t support = 0;
};

struct EvalMetrics {
  std::size_t n = 0;
  double accuracy = 0;
  std::array<ClassMetrics, 2> per_class{};  // indexed by kSafe / kUnsafe
  ClassMetrics macro;
  // Confusion counts with "unsafe" as the positive class.
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

namespace detail {
inline double ratio_or_zero(std::size_t num, std::size_t den, const char* what, std::string_view cls, bool quiet) {
  if (den == 0) {
    if (!quiet) warn(std::string(what) + " for class '" + std::string(cls) + "' is undefined; reported as 0");
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}
inline double harmonic(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }
}  // namespace detail

/// Metrics from confusion counts (unsafe = positive).
inline EvalMetrics metrics_from_confusion(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn,
                                          bool quiet = false) {
  EvalMetrics m;
  m.tp = tp, m.fp = fp, m.fn = fn, m.tn = tn;
  m.n = tp + fp + fn + tn;
  if (m.n == 0) throw ValidationError("cannot compute metrics on zero samples");
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(m.n);
  auto& u = m.per_class[kUnsafe];
  u.precision = detail::ratio_or_zero(tp, tp + fp, "precision", "unsafe", quiet);
  u.recall = detail::ratio_or_zero(tp, tp + fn, "recall", "unsafe", quiet);
  u.support = tp + fn;
  auto& s = m.per_class[kSafe];
  s.precision = detail::ratio_or_zero(tn, tn + fn, "precision", "safe", quiet);
  s.recall = detail::ratio_or_zero(tn, tn + fp, "recall", "safe", quiet);
  s.support = tn + fp;
  for (auto& c : m.per_class) c.f1 = detail::harmonic(c.precision, c.recall);
  m.macro.precision = (s.precision + u.precision) / 2;
  m.macro.recall = (s.recall + u.recall) / 2;
  m.macro.f1 = (s.f1 + u.f1) / 2;
  m.macro.support = m.n;
  return m;
}

inline EvalMetrics compute_metrics(std::span<const int> predicted, std::span<const int> labels, bool quiet = false) {
  if (predicted.size() != labels.size()) throw ConfigError("prediction and label counts differ");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predicted[i] == kUnsafe, y = labels[i] == kUnsafe;
    tp += p && y;
    fp += p && !y;
    fn += !p && y;
    tn += !p && !y;
  }
  return metrics_from_confusion(tp, fp, fn, tn, quiet);
}

/// Flat (name, value) view used for summaries and reports.
inline std::vector<std::pair<std::string, double>> metric_values(const EvalMetrics& m) {
  return {{"accuracy", m.accuracy},
          {"precision_macro", m.macro.precision},
          {"recall_macro", m.macro.recall},
          {"f1_macro", m.macro.f1},
          {"precision_safe", m.per_class[kSafe].precision},
          {"recall_safe", m.per_class[kSafe].recall},
          {"f1_safe", m.per_class[kSafe].f1},
          {"precision_unsafe", m.per_class[kUnsafe].precision},
          {"recall_unsafe", m.per_class[kUnsafe].recall},
          {"f1_unsafe", m.per_class[kUnsafe].f1}};
}

inline nlohmann::ordered_json metrics_to_json(const EvalMetrics& m) {
  nlohmann::ordered_json j;
  j["n"] = m.n;
  for (const auto& [k, v] : metric_values(m)) j[k] = v;
  j["confusion"] = {{"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"tn", m.tn}};
  return j;
}

struct MetricSummary {
  std::vector<std::string> names;
  std::vector<double> mean, stddev;  // population standard deviation
};

inline MetricSummary summarize(std::span<const EvalMetrics> folds) {
  if (folds.empty()) throw ConfigError("no folds to summarize");
  MetricSummary s;
  for (const auto& [k, v] : metric_values(folds[0])) s.names.push_back(k);
  s.mean.assign(s.names.size(), 0.0);
  s.stddev.assign(s.names.size(), 0.0);
  for (const auto& f : folds) {
    const auto vals = metric_values(f);
    for (std::size_t i = 0; i < vals.size(); ++i) s.mean[i] += vals[i].second;
  }
  for (auto& m : s.mean) m /= static_cast<double>(folds.size());
  for (const auto& f : folds) {
    const auto vals = metric_values(f);
    for (std::size_t i = 0; i < vals.size(); ++i) s.stddev[i] += (vals[i].second - s.mean[i]) * (vals[i].second - s.mean[i]);
  }
  for (auto& v : s.stddev) v = std::sqrt(v / static_cast<double>(folds.size()));
  return s;
}

// ---------------------------------------------------------------------------
// Predictions

struct PredictionRecord {
  std::string id;
  double prob_safe = 0;
  double prob_unsafe = 0;
  int predicted = kUnsafe;
  int label = kUnsafe;

  double confidence() const { return std::max(prob_safe, prob_unsafe); }
  bool correct() const { return predicted == label; }
};

inline std::string_view class_name(int c) { return c == kSafe ? "safe" : "unsafe"; }

inline nlohmann::ordered_json record_to_json(const PredictionRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["prob_safe"] = r.prob_safe;
  j["prob_unsafe"] = r.prob_unsafe;
  j["predicted"] = class_name(r.predicted);
  j["label"] = class_name(r.label);
  return j;
}

inline void write_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

inline std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open predictions '" + path.string() + "'");
  std::vector<PredictionRecord> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PredictionRecord r;
      r.id = j.at("id").get<std::string>();
      r.prob_safe = j.at("prob_safe").get<double>();
      r.prob_unsafe = j.at("prob_unsafe").get<double>();
      r.predicted = class_index(parse_safety(j.at("predicted").get<std::string>()));
      r.label = class_index(parse_safety(j.at("label").get<std::string>()));
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline constexpr std::size_t kPredictChunk = 64;

/// Class probabilities for `indices`, {n, 2}. Inputs go through the model in
/// fixed chunks so every inference mode sees identical batches.
template <class T>
Tensor<T> predict(const FusionModel<T>& model, const PreparedSet<T>& data, std::span<const std::size_t> indices,
                  Mode mode, Rng* rng = nullptr) {
  Tensor<T> probs({indices.size(), 2});
  ForwardContext ctx{mode, rng, nullptr};
  for (std::size_t start = 0; start < indices.size(); start += kPredictChunk) {
    const std::size_t count = std::min(kPredictChunk, indices.size() - start);
    const Batch<T> b = data.batch(indices.subspan(start, count));
    const Tensor<T> p = model.forward(b, ctx).probs;
    std::copy_n(p.ptr(), p.size(), probs.ptr() + start * 2);
  }
  return probs;
}

template <class T>
std::vector<PredictionRecord> make_records(const Tensor<T>& probs, const PreparedSet<T>& data,
                                           std::span<const std::size_t> indices) {
  std::vector<PredictionRecord> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto& r = out[i];
    r.id = data.samples[indices[i]].id;
    r.prob_safe = static_cast<double>(probs[i * 2 + kSafe]);
    r.prob_unsafe = static_cast<double>(probs[i * 2 + kUnsafe]);
    r.predicted = decide(probs[i * 2 + kSafe], probs[i * 2 + kUnsafe]);
    r.label = data.labels[indices[i]];
  }
  return out;
}

struct EvalResult {
  EvalMetrics metrics;
  std::vector<PredictionRecord> records;
};

inline EvalMetrics metrics_of(std::span<const PredictionRecord> records, bool quiet = false) {
  std::vector<int> pred, lab;
  for (const auto& r : records) {
    pred.push_back(r.predicted);
    lab.push_back(r.label);
  }
  return compute_metrics(pred, lab, quiet);
}

/// Deterministic evaluation of `indices` (all samples when empty).
inline EvalResult evaluate(const Checkpoint& ck, std::span<const PairedSample> samples,
                           std::span<const std::size_t> indices = {}) {
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(samples.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    indices = all;
  }
  const auto model = ck.instantiate();
  const auto data = prepare<float>(samples, ck.stats, ck.config);
  const auto probs = predict(model, data, indices, Mode::infer_deterministic);
  EvalResult res;
  res.records = make_records(probs, data, indices);
  res.metrics = metrics_of(res.records);
  return res;
}

// ---------------------------------------------------------------------------
// Training

struct FoldArtifacts {
  Checkpoint checkpoint;
  TrainingHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

namespace detail {
inline void check_disjoint(std::span<const std::size_t> a, std::span<const std::size_t> b, std::size_t n) {
  std::vector<char> seen(n, 0);
  for (std::size_t i : a) {
    if (i >= n) throw ConfigError("training index out of range");
    seen[i] = 1;
  }
  for (std::size_t i : b) {
    if (i >= n) throw ConfigError("validation index out of range");
    if (seen[i]) throw ConfigError("training and validation indices overlap at " + std::to_string(i));
  }
}

template <class T>
double mean_cross_entropy(const Tensor<T>& probs, std::span<const int> labels) {
  double loss = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    loss -= std::log(std::max(static_cast<double>(probs[i * 2 + static_cast<std::size_t>(labels[i])]), kProbabilityFloor));
  return loss / static_cast<double>(labels.size());
}
}  // namespace detail

/// Trains one model on `train`, early-stopping on `val`, and returns the
/// parameters of the best validation epoch. Seeds: init, shuffling and
/// dropout draw from independent streams derived from `seed`.
inline FoldArtifacts train_fold(const ModelConfig& cfg, std::span<const PairedSample> samples,
                                std::span<const std::size_t> train, std::span<const std::size_t> val,
                                const Hyperparams& hp, std::uint64_t seed, const EpochCallback& on_epoch = {}) {
  hp.validate();
  cfg.validate();
  if (train.size() < 2) throw ConfigError("train_fold needs at least two training samples");
  if (val.empty()) throw ConfigError("train_fold needs a non-empty validation set");
  detail::check_disjoint(train, val, samples.size());

  const StandardizerStats stats = fit_standardizer(samples, train);
  const auto data = prepare<float>(samples, stats, cfg);
  FusionModel<float> model(cfg, derive_seed(seed, 0));
  Adam<float> adam(hp.adam());
  Rng shuffle_rng(derive_seed(seed, 1));
  Rng dropout_rng(derive_seed(seed, 2));
  EarlyStopper stopper(hp.patience);

  std::vector<std::size_t> order(train.begin(), train.end());
  std::vector<int> val_labels;
  for (std::size_t i : val) val_labels.push_back(data.labels[i]);

  FoldArtifacts out;
  auto best = snapshot_parameters(model);
  for (std::size_t epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0;
    for (std::size_t start = 0, b = 1; start < order.size(); start += hp.batch_size, ++b) {
      const std::size_t count = std::min(hp.batch_size, order.size() - start);
      const Batch<float> batch = data.batch(std::span(order).subspan(start, count));
      FusionTape<float> tape;
      model.zero_grad();
      model.forward(batch, {Mode::train, &dropout_rng, nullptr}, &tape);
      const float objective = model.backward(tape, batch.labels);
      if (!std::isfinite(objective))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      auto params = model.parameters();
      adam.step(params);
      model.commit(tape);
      for (const auto* p : params)
        if (!all_finite(p->value))
          throw NumericError("non-finite parameter '" + p->name + "' after update at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(b));
      loss_sum += static_cast<double>(objective) * static_cast<double>(count);
    }

    const auto probs = predict(model, data, val, Mode::infer_deterministic);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = detail::mean_cross_entropy(probs, val_labels);
    if (!std::isfinite(rec.val_loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < val.size(); ++i) hits += decide(probs[i * 2 + kSafe], probs[i * 2 + kUnsafe]) == val_labels[i];
    rec.val_acc = static_cast<double>(hits) / static_cast<double>(val.size());
    out.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (stopper.observe(rec.val_loss)) best = snapshot_parameters(model);
    if (stopper.should_stop()) {
      out.history.stopped_early = epoch < hp.max_epochs;
      break;
    }
  }
  out.history.best_epoch = stopper.best_epoch();

  out.checkpoint.config = cfg;
  out.checkpoint.stats = stats;
  out.checkpoint.params = std::move(best);
  out.checkpoint.metadata["seed"] = seed;
  out.checkpoint.metadata["hyperparams"] = hyperparams_to_json(hp);
  out.checkpoint.metadata["history"] = out.history.to_json();
  return out;
}

struct FoldOutcome {
  FoldArtifacts artifacts;
  std::vector<std::size_t> train, val, test;
  EvalResult eval;
};

struct CrossValidation {
  FoldSplit split;
  std::vector<FoldOutcome> folds;
  MetricSummary summary;

  /// Out-of-fold predictions of every sample, in fold order.
  std::vector<PredictionRecord> pooled_records() const {
    std::vector<PredictionRecord> out;
    for (const auto& f : folds) out.insert(out.end(), f.eval.records.begin(), f.eval.records.end());
    return out;
  }
};

using FoldCallback = std::function<void(std::size_t fold, const EpochRecord&)>;

/// k-fold cross-validation. Each fold trains on the other k-1 folds (minus a
/// stratified validation carve-out) and is evaluated on itself. Folds are
/// independent, so `jobs` > 1 runs them on separate threads with identical
/// results.
inline CrossValidation cross_validate(const ModelConfig& cfg, std::span<const PairedSample> samples, std::size_t k,
                                      const Hyperparams& hp, std::uint64_t seed, std::size_t jobs = 1,
                                      const FoldCallback& on_epoch = {}) {
  hp.validate();
  std::vector<int> labels;
  for (const auto& s : samples) labels.push_back(class_index(s.label.safety));
  CrossValidation cv;
  cv.split = split_kfold(labels, k, seed);
  cv.folds.resize(k);

  const auto run = [&](std::size_t f) {
    FoldOutcome& o = cv.folds[f];
    o.test = cv.split.folds[f];
    const auto rest = cv.split.complement(f);
    std::tie(o.train, o.val) = stratified_holdout(rest, labels, hp.val_fraction, derive_seed(seed, 200 + f));
    EpochCallback cb;
    if (on_epoch) cb = [&, f](const EpochRecord& r) { on_epoch(f, r); };
    o.artifacts = train_fold(cfg, samples, o.train, o.val, hp, derive_seed(seed, 100 + f), cb);
    o.artifacts.checkpoint.metadata["fold"] = f;
    o.eval = evaluate(o.artifacts.checkpoint, samples, o.test);
  };

  jobs = std::clamp<std::size_t>(jobs, 1, k);
  if (jobs == 1) {
    for (std::size_t f = 0; f < k; ++f) run(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(k);
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j)
      pool.emplace_back([&] {
        for (std::size_t f; (f = next++) < k;) {
          try {
            run(f);
          } catch (...) {
            errors[f] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::vector<EvalMetrics> per_fold;
  for (const auto& f : cv.folds) per_fold.push_back(f.eval.metrics);
  cv.summary = summarize(per_fold);
  return cv;
}

}  // namespace mff
