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

// mff: dataset building, cross-validated training, evaluation, calibration,
// MC dropout and the results table.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mff/cli.hpp"

namespace {

using namespace mff;
using namespace mff::cli;

void add_seed(CLI::App* app, std::optional<std::uint64_t>& seed) {
  app->add_option("--seed", seed, "RNG seed (falls back to $MFF_SEED, then 0)");
}

void add_model(CLI::App* app, ModelArgs& m) {
  app->add_option("--fusion", m.fusion, "early | late")->check(CLI::IsMember({"early", "late"}));
  app->add_option("--features", m.features, "mel | mfcc")->check(CLI::IsMember({"mel", "mfcc"}));
  app->add_option("--scale", m.scale, "paper | tiny")->check(CLI::IsMember({"paper", "tiny"}));
  app->add_option("--dropout", m.dropout, "dropout rate in [0, 1) (0.5 paper, 0.3 tiny)");
  app->add_flag("--separate-towers", m.separate_towers, "independent left/right vision weights");
}

int run(int argc, char** argv) {
  CLI::App app{"Audio-vision fusion classifier for command safety"};
  app.require_subcommand(1);

  BuildDatasetArgs build;
  auto* b = app.add_subcommand("build-dataset", "write a seeded JSON Lines manifest");
  b->add_option("--out", build.out, "manifest path")->required();
  b->add_option("--n", build.n, "number of pairs");
  b->add_option("--balance", build.balance, "fraction of safe pairs");
  b->add_option("--mode", build.mode, "synthetic | ingest")->check(CLI::IsMember({"synthetic", "ingest"}));
  b->add_option("--source", build.source, "ingest listing (JSON Lines of real files)");
  b->add_flag("--skip-invalid", build.skip_invalid, "drop invalid ingest records instead of failing");
  add_seed(b, build.seed);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "k-fold cross-validated training");
  t->add_option("--manifest", train.manifest)->required();
  t->add_option("--out", train.out, "run directory")->required();
  t->add_option("--folds", train.folds, "number of folds");
  t->add_option("--lr", train.hyper.learning_rate, "learning rate (0.01 paper, 1e-3 tiny)");
  t->add_option("--batch-size", train.hyper.batch_size);
  t->add_option("--epochs", train.hyper.max_epochs, "maximum epochs");
  t->add_option("--patience", train.hyper.patience, "early-stopping patience");
  t->add_option("--jobs", train.jobs, "folds trained in parallel");
  t->add_flag("-v,--verbose", train.verbose, "per-epoch progress on stderr");
  add_model(t, train.model);
  add_seed(t, train.seed);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  e->add_option("--checkpoint", eval.checkpoint)->required();
  e->add_option("--manifest", eval.manifest)->required();
  e->add_option("--out", eval.out)->required();

  CalibrateArgs cal;
  auto* c = app.add_subcommand("calibrate", "ECE, reliability bins and figures from predictions");
  c->add_option("--predictions", cal.predictions, "predictions.jsonl")->required();
  c->add_option("--out", cal.out)->required();
  c->add_option("--bins", cal.bins, "bin count M");
  c->add_option("--title", cal.title, "figure title suffix");

  McArgs mc;
  auto* m = app.add_subcommand("mc", "Monte-Carlo dropout analysis");
  m->add_option("--checkpoint", mc.checkpoint)->required();
  m->add_option("--manifest", mc.manifest)->required();
  m->add_option("--out", mc.out)->required();
  m->add_option("--passes", mc.passes, "stochastic passes T");
  m->add_option("--hist-bins", mc.hist_bins);
  m->add_option("--jobs", mc.jobs, "passes run in parallel");
  add_seed(m, mc.seed);

  ReportArgs report;
  auto* r = app.add_subcommand("report", "results table over a directory of training runs");
  r->add_option("--runs", report.runs)->required();
  r->add_option("--out", report.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*b) return cmd_build_dataset(build);
  if (*t) return cmd_train(train);
  if (*e) return cmd_eval(eval);
  if (*c) return cmd_calibrate(cal);
  if (*m) return cmd_mc(mc);
  return cmd_report(report);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const mff::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const mff::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const mff::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitData;
  } catch (const mff::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
