/*
 * Copyright 2026 The CNNEELM Authors.
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

// Drives the installed binary end to end. Every run clears CNNEELM_SEED
// unless a test sets it on purpose.

#include <sys/wait.h>

#include <cstdio>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cnneelm/dataio.hpp"
#include "cnneelm/motion.hpp"
#include "test_util.hpp"

namespace cnneelm {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliRun {
  int code = -1;
  std::string out, err;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

CliRun run_cli(const std::string& args, const fs::path& scratch, const std::string& env = "") {
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = "env -u CNNEELM_SEED " + env + " " + quote(CNNEELM_CLI) + " " + args + " 2>" +
                          quote(err.string());
  CliRun r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = fs::exists(err) ? test::read_text(err) : "";
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new test::TempDir;
    const CliRun p = run_cli("prepare --format synthetic --per-class 10 --seed 3 --output " + quote(data().string()), dir_->path());
    ASSERT_EQ(p.code, 0) << p.err;
    const CliRun t = run_cli("train --dataset " + quote(data().string()) + " --epochs 2 --quiet --seed 5 --out " +
                              quote(model().string()),
                          dir_->path());
    ASSERT_EQ(t.code, 0) << t.err;
  }
  static void TearDownTestSuite() { delete dir_; }
  static fs::path data() { return *dir_ / "data"; }
  static fs::path model() { return *dir_ / "model.json"; }
  static test::TempDir* dir_;

  CliRun run(const std::string& args, const std::string& env = "") { return run_cli(args, dir_->path(), env); }
  std::string train_args(const std::string& out, const std::string& extra = "") {
    return "train --dataset " + quote(data().string()) + " --epochs 2 --quiet --out " + quote((*dir_ / out).string()) +
           " " + extra;
  }
};
test::TempDir* CliTest::dir_ = nullptr;

TEST_F(CliTest, PrepareReportsCounts) {
  const json j = json::parse(run("prepare --format synthetic --per-class 10 --seed 3 --output " +
                                 quote((*dir_ / "again").string()))
                                 .out);
  EXPECT_EQ(j["loaded"].get<int>(), 60);
  EXPECT_EQ(j["kept"].get<int>() + j["discarded"].get<int>(), 60);
  EXPECT_TRUE(fs::exists(*dir_ / "again" / "filter_report.csv"));
}

TEST_F(CliTest, TrainWritesOneMetricsRowPerEpoch) {
  const std::string csv = test::read_text(*dir_ / "model.metrics.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(csv.rfind("epoch,", 0), 0u);
}

TEST_F(CliTest, SameSeedSameMetricsAndModel) {
  ASSERT_EQ(run(train_args("a.json", "--seed 9")).code, 0);
  ASSERT_EQ(run(train_args("b.json", "--seed 9")).code, 0);
  EXPECT_EQ(test::read_text(*dir_ / "a.metrics.csv"), test::read_text(*dir_ / "b.metrics.csv"));
  EXPECT_EQ(test::read_text(*dir_ / "a.json"), test::read_text(*dir_ / "b.json"));
}

TEST_F(CliTest, EnvironmentSeedIsFallback) {
  ASSERT_EQ(run(train_args("e1.json"), "CNNEELM_SEED=9").code, 0);
  ASSERT_EQ(run(train_args("e2.json", "--seed 9")).code, 0);
  ASSERT_EQ(run(train_args("e3.json", "--seed 10"), "CNNEELM_SEED=9").code, 0);
  EXPECT_EQ(test::read_text(*dir_ / "e1.json"), test::read_text(*dir_ / "e2.json"));
  EXPECT_NE(test::read_text(*dir_ / "e3.json"), test::read_text(*dir_ / "e2.json"));
  const CliRun bad = run(train_args("e4.json"), "CNNEELM_SEED=abc");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("CNNEELM_SEED"), std::string::npos);
}

TEST_F(CliTest, UpdateRulesProduceDifferentModels) {
  ASSERT_EQ(run(train_args("base.json", "--seed 4 --update baseline --head softmax")).code, 0);
  const CliRun m = run(train_args("mod.json", "--seed 4 --update modified-conventional --head softmax"));
  ASSERT_EQ(m.code, 0) << m.err;
  EXPECT_EQ(json::parse(m.out)["loss"], "log-likelihood");
  EXPECT_NE(test::read_text(*dir_ / "base.json"), test::read_text(*dir_ / "mod.json"));
}

TEST_F(CliTest, ConfigFileSuppliesFlagsAndCommandLineWins) {
  test::write_text(*dir_ / "cfg.json", json{{"epochs", 3}, {"seed", 11}, {"head", "forest"}}.dump());
  const CliRun r = run("--config " + quote((*dir_ / "cfg.json").string()) + " " + train_args("cfg_model.json", "--epochs 1"));
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_EQ(j["epochs"].get<int>(), 1);
  EXPECT_EQ(j["seed"].get<int>(), 11);
  EXPECT_EQ(j["head"], "forest");
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("train --dataset " + quote((*dir_ / "nowhere").string())).code, 2);
  EXPECT_EQ(run(train_args("x.json", "--lr -1")).code, 2);
  EXPECT_EQ(run(train_args("x.json", "--update sideways")).code, 2);
  // A learning rate this large overflows the weights: a runtime failure,
  // not bad input.
  const CliRun d = run(train_args("div.json", "--lr 1.7e308 --update baseline"));
  EXPECT_EQ(d.code, 1) << d.err;
  EXPECT_NE(d.err.find("diverged"), std::string::npos) << d.err;
}

TEST_F(CliTest, CorruptImageNamesTheFile) {
  const fs::path in = *dir_ / "corrupt";
  fs::create_directories(in / "happy");
  test::write_text(in / "happy" / "bad_face.pgm", "P5\n48 48\n255\nshort");
  const CliRun r = run("prepare --input " + quote(in.string()) + " --output " + quote((*dir_ / "c_out").string()));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("bad_face.pgm"), std::string::npos) << r.err;
}

TEST_F(CliTest, MalformedModelIsUserError) {
  Rng rng(1);
  write_pgm(*dir_ / "face.pgm", synth_dataset(rng, 1).samples[2].image);
  test::write_text(*dir_ / "junk.json", "{\"network\": 3}");
  const CliRun r = run("classify --model " + quote((*dir_ / "junk.json").string()) + " --image " +
                    quote((*dir_ / "face.pgm").string()));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("format version"), std::string::npos) << r.err;
}

TEST_F(CliTest, ClassifyIsRepeatable) {
  Rng rng(2);
  write_pgm(*dir_ / "face2.pgm", synth_dataset(rng, 1).samples[1].image);
  const std::string args = "classify --model " + quote(model().string()) + " --image " + quote((*dir_ / "face2.pgm").string());
  const CliRun a = run(args), b = run(args);
  ASSERT_EQ(a.code, 0) << a.err;
  const json ja = json::parse(a.out), jb = json::parse(b.out);
  EXPECT_EQ(ja["scores"], jb["scores"]);
  EXPECT_EQ(ja["label"], jb["label"]);
  EXPECT_EQ(ja["scores"].size(), 6u);
}

TEST_F(CliTest, VideoFindsPeakAndWarnsOnStillSequences) {
  write_frame_sequence(*dir_ / "seq", FrameSequence{synth_expression_sequence(12, 7), 30.0});
  const CliRun r = run("video --model " + quote(model().string()) + " --frames " + quote((*dir_ / "seq").string()));
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_EQ(j["peakIndex"].get<int>(), 7);
  EXPECT_EQ(j["frames"].get<int>(), 12);
  EXPECT_TRUE(j.contains("meetsFps"));

  Rng rng(3);
  const GrayImage f = synth_dataset(rng, 1).samples[0].image;
  write_frame_sequence(*dir_ / "still", FrameSequence{{f, f, f}, 30.0});
  const CliRun s = run("video --model " + quote(model().string()) + " --frames " + quote((*dir_ / "still").string()));
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_NE(s.err.find("warning"), std::string::npos);

  write_frame_sequence(*dir_ / "one", FrameSequence{{f}, 30.0});
  const CliRun o = run("video --model " + quote(model().string()) + " --frames " + quote((*dir_ / "one").string()));
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(json::parse(o.out)["peakIndex"].get<int>(), 0);
}

TEST_F(CliTest, BenchHandlesOneAndSeveralRepeats) {
  for (int repeats : {1, 5}) {
    const fs::path out = *dir_ / ("bench" + std::to_string(repeats) + ".json");
    const CliRun r = run("bench --dataset " + quote(data().string()) + " --model " + quote(model().string()) +
                      " --repeats " + std::to_string(repeats) + " --out " + quote(out.string()));
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(test::read_text(out));
    ASSERT_EQ(j["entries"].size(), 1u);
    EXPECT_EQ(j["entries"][0]["repeat_means_ms"].size(), static_cast<std::size_t>(repeats));
    EXPECT_GT(j["entries"][0]["fps"].get<double>(), 0.0);
    EXPECT_TRUE(fs::exists(fs::path(out).replace_extension(".csv")));
  }
  EXPECT_EQ(run("bench --dataset " + quote(data().string()) + " --model " + quote(model().string()) +
                " --heads forest --out " + quote((*dir_ / "b.json").string()))
                .code,
            2);
}

TEST_F(CliTest, ReportWritesCharts) {
  const fs::path out = *dir_ / "report";
  const CliRun r = run("report --metrics " + quote((*dir_ / "model.metrics.csv").string()) + " --model " +
                    quote(model().string()) + " --dataset " + quote(data().string()) + " --out " + quote(out.string()));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"accuracy.svg", "loss.svg", "weights.svg", "biases.svg", "per_class_accuracy.svg", "confusion.csv"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_EQ(test::read_text(out / "accuracy.svg").rfind("<svg", 0), 0u);
  EXPECT_EQ(run("report --out " + quote(out.string())).code, 2);
}

}  // namespace
}  // namespace cnneelm
