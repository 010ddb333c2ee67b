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
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mff/cli.hpp"
#include "oracles.hpp"

namespace {

namespace fs = std::filesystem;

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " MFF_CLI_PATH " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir = new fs::path(oracle::scratch_dir("cli"));
    ASSERT_EQ(run("build-dataset --out " + (*dir / "m.jsonl").string() + " --n 16 --seed 4"), 0);
  }
  static void TearDownTestSuite() { delete dir; }

  static std::string train_args(const fs::path& out, const std::string& fusion = "early") {
    return "train --manifest " + (*dir / "m.jsonl").string() + " --out " + out.string() + " --fusion " + fusion +
           " --features mel --scale tiny --folds 2 --epochs 2 --patience 1 --batch-size 8 --seed 3";
  }

  static fs::path* dir;
};

fs::path* Cli::dir = nullptr;

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("build-dataset --out " + (*dir / "x.jsonl").string() + " --n 0"), 2);
  EXPECT_EQ(run("build-dataset --out " + (*dir / "x.jsonl").string() + " --balance 2"), 2);
  EXPECT_EQ(run("train --manifest " + (*dir / "m.jsonl").string() + " --out " + (*dir / "bad").string() +
                " --fusion middle"),
            2);
  EXPECT_EQ(run("train --manifest " + (*dir / "m.jsonl").string() + " --out " + (*dir / "bad").string() +
                " --scale tiny --folds 1"),
            2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("build-dataset --out " + (*dir / "x.jsonl").string(), "MFF_SEED=abc"), 2);
}

TEST_F(Cli, DataErrorsExitThree) {
  EXPECT_EQ(run("train --manifest " + (*dir / "missing.jsonl").string() + " --out " + (*dir / "bad").string() +
                " --scale tiny"),
            3);
  {
    std::ofstream out(*dir / "broken.jsonl");
    out << "{\"id\": 1}\n";
  }
  EXPECT_EQ(run("train --manifest " + (*dir / "broken.jsonl").string() + " --out " + (*dir / "bad").string() +
                " --scale tiny"),
            3);
  EXPECT_EQ(run("calibrate --predictions " + (*dir / "m.jsonl").string() + " --out " + (*dir / "bad").string()), 3);
}

TEST_F(Cli, SeedFlagAndEnvironmentAgree) {
  const auto a = *dir / "a.jsonl", b = *dir / "b.jsonl", c = *dir / "c.jsonl";
  ASSERT_EQ(run("build-dataset --out " + a.string() + " --n 30 --seed 11"), 0);
  ASSERT_EQ(run("build-dataset --out " + b.string() + " --n 30", "MFF_SEED=11"), 0);
  ASSERT_EQ(run("build-dataset --out " + c.string() + " --n 30 --seed 12", "MFF_SEED=11"), 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_NE(slurp(a), slurp(c));
}

TEST_F(Cli, TrainingRerunsAreByteIdentical) {
  const auto r1 = *dir / "run1", r2 = *dir / "run2";
  ASSERT_EQ(run(train_args(r1)), 0);
  ASSERT_EQ(run(train_args(r2)), 0);
  for (const char* f : {"config.json", "summary.json", "predictions.jsonl", "metrics.json", "fold_00/checkpoint.bin",
                        "fold_01/history.csv", "fold_01/metrics.json"}) {
    ASSERT_TRUE(fs::exists(r1 / f)) << f;
    EXPECT_EQ(slurp(r1 / f), slurp(r2 / f)) << f;
  }
  const auto summary = nlohmann::json::parse(slurp(r1 / "summary.json"));
  EXPECT_TRUE(summary["cv"].contains("f1_macro"));
  EXPECT_TRUE(summary["pooled"].contains("ece_percent"));
}

TEST_F(Cli, EvalCalibrateAndMc) {
  const auto r = *dir / "run_eval";
  ASSERT_EQ(run(train_args(r, "late")), 0);
  const auto ck = r / "fold_00" / "checkpoint.bin";
  ASSERT_EQ(run("eval --checkpoint " + ck.string() + " --manifest " + (*dir / "m.jsonl").string() + " --out " +
                (*dir / "eval").string()),
            0);
  EXPECT_TRUE(fs::exists(*dir / "eval" / "metrics.json"));
  ASSERT_EQ(run("calibrate --predictions " + (r / "predictions.jsonl").string() + " --out " + (*dir / "cal").string()),
            0);
  for (const char* f : {"report.json", "bins.csv", "reliability.svg", "confidence_hist.svg"})
    EXPECT_GT(fs::file_size(*dir / "cal" / f), 0u) << f;
  ASSERT_EQ(run("mc --checkpoint " + ck.string() + " --manifest " + (*dir / "m.jsonl").string() + " --out " +
                (*dir / "mc").string() + " --passes 4 --seed 2"),
            0);
  const auto rep = nlohmann::json::parse(slurp(*dir / "mc" / "mc_report.json"));
  EXPECT_EQ(rep["per_pass_accuracy"].size(), 4u);
  EXPECT_EQ(rep["per_sample"].size(), 16u);
  EXPECT_EQ(run("mc --checkpoint " + ck.string() + " --manifest " + (*dir / "m.jsonl").string() + " --out " +
                (*dir / "mc0").string() + " --passes 0"),
            2);
}

TEST_F(Cli, ReportMarksMissingCellsAbsent) {
  const auto runs = *dir / "runs";
  ASSERT_EQ(run(train_args(runs / "early_mel")), 0);
  ASSERT_EQ(run("report --runs " + runs.string() + " --out " + (*dir / "table").string()), 0);
  const auto csv = slurp(*dir / "table" / "table.csv");
  std::istringstream lines(csv);
  std::vector<std::string> rows;
  for (std::string l; std::getline(lines, l);) rows.push_back(l);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "Fusion Method,Features,Accuracy,Precision,Recall,F1,ECE");
  EXPECT_EQ(rows[1].rfind("Early Fusion,Mel-spectrogram,", 0), 0u);
  EXPECT_EQ(rows[1].find("absent"), std::string::npos);
  for (std::size_t i = 2; i < 5; ++i) EXPECT_NE(rows[i].find("absent"), std::string::npos) << rows[i];
  EXPECT_EQ(run("report --runs " + (*dir / "nowhere").string() + " --out " + (*dir / "t2").string()), 3);
}

TEST(CliSeed, ResolveOrder) {
  ::unsetenv("MFF_SEED");
  EXPECT_EQ(mff::cli::resolve_seed(std::nullopt), 0u);
  ::setenv("MFF_SEED", "17", 1);
  EXPECT_EQ(mff::cli::resolve_seed(std::nullopt), 17u);
  EXPECT_EQ(mff::cli::resolve_seed(5), 5u);
  ::setenv("MFF_SEED", "-3", 1);
  EXPECT_THROW(mff::cli::resolve_seed(std::nullopt), mff::ConfigError);
  ::unsetenv("MFF_SEED");
}

}  // namespace
