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

#include <cmath>

#include <gtest/gtest.h>

#include "cnneelm/bench.hpp"
#include "cnneelm/report.hpp"
#include "test_util.hpp"

namespace cnneelm {
namespace {

class BenchTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    Rng g(5), s(6);
    data_ = new Dataset(split(synth_dataset(g, 2), SplitRatios{0.5, 0.5, 0.0}, s));
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 6;
    bundle_ = new ModelBundle(train(cfg, *data_, HeadKind::Elm).bundle);
  }
  static void TearDownTestSuite() {
    delete bundle_;
    delete data_;
  }
  static Dataset* data_;
  static ModelBundle* bundle_;
};
Dataset* BenchTest::data_ = nullptr;
ModelBundle* BenchTest::bundle_ = nullptr;

TEST_F(BenchTest, FpsIdentityAndStageSum) {
  const BenchEntry e = bench_model(*bundle_, data_->subset(Split::Validation), 3);
  EXPECT_EQ(e.repeats, 3u);
  EXPECT_EQ(e.repeat_means.size(), 3u);
  EXPECT_NEAR(e.fps * e.mean_ms, 1000.0, 1e-9);
  const double stages = e.stages.preprocess_ms + e.stages.saliency_ms + e.stages.network_ms + e.stages.head_ms;
  EXPECT_NEAR(stages, e.mean_ms, 0.05 * e.mean_ms);
  EXPECT_LE(e.median_ms, e.p95_ms);
  EXPECT_GE(e.accuracy, 0.0);
  EXPECT_LE(e.accuracy, 1.0);
}

TEST_F(BenchTest, SingleRepeatStillHasP95) {
  const BenchEntry e = bench_model(*bundle_, data_->subset(Split::Validation), 1);
  EXPECT_TRUE(std::isfinite(e.p95_ms));
  EXPECT_THROW(bench_model(*bundle_, data_->subset(Split::Validation), 0), ParameterError);
  EXPECT_THROW(bench_model(*bundle_, {}, 1), ParameterError);
}

TEST_F(BenchTest, ReportJsonHasComparisonWhenBothHeadsPresent) {
  BenchReport r;
  BenchEntry a, b;
  a.head = "elm";
  a.repeat_median_ms = 2.0;
  a.stages.head_ms = 0.5;
  b.head = "forest";
  b.repeat_median_ms = 4.0;
  b.stages.head_ms = 1.0;
  r.entries = {a, b};
  const auto j = bench_to_json(r);
  EXPECT_DOUBLE_EQ(j["elm_vs_forest"]["latency_ratio"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(j["elm_vs_forest"]["head_stage_delta_ms"].get<double>(), -0.5);
  const std::string csv = bench_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Report, DeltaSummaryAgainstHandComputedInterval) {
  std::vector<DeltaRun> runs;
  const double d[] = {0.01, 0.03, -0.02, 0.04};
  for (int i = 0; i < 4; ++i) runs.push_back({static_cast<std::uint64_t>(i), 0.5, 0.5 + d[i]});
  const DeltaSummary s = summarize_deltas(runs);
  EXPECT_NEAR(s.mean_delta, 0.015, 1e-12);
  double ss = 0.0;
  for (double v : d) ss += (v - 0.015) * (v - 0.015);
  const double sd = std::sqrt(ss / 3.0);
  EXPECT_NEAR(s.sd_delta, sd, 1e-12);
  // t_{0.975, 3} = 3.182446305284263
  EXPECT_NEAR(s.ci_high - s.mean_delta, 3.182446305284263 * sd / 2.0, 1e-9);
  EXPECT_NEAR(s.mean_delta - s.ci_low, 3.182446305284263 * sd / 2.0, 1e-9);
  const DeltaSummary one = summarize_deltas({runs[0]});
  EXPECT_TRUE(std::isnan(one.ci_low));
}

TEST(Report, MetricsCsvParsing) {
  const MetricsTable t = parse_metrics_csv("epoch,trainAcc\n1,0.5\n2,0.75\n");
  EXPECT_EQ(t.columns, (std::vector<std::string>{"epoch", "trainAcc"}));
  EXPECT_EQ(t.column("trainAcc"), (std::vector<double>{0.5, 0.75}));
  try {
    parse_metrics_csv("epoch,trainAcc\n1,0.5\n2,oops\n");
    FAIL();
  } catch (const RowError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Report, SvgChartsAreWellFormed) {
  const std::string line = svg_line_chart("acc <train>", {Series{"train", {1, 2, 3}, {0.2, 0.5, 0.9}}}, "epoch", "acc");
  EXPECT_EQ(line.rfind("<svg", 0), 0u);
  EXPECT_NE(line.find("</svg>"), std::string::npos);
  EXPECT_NE(line.find("&lt;train&gt;"), std::string::npos);
  EXPECT_NE(line.find("<polyline"), std::string::npos);
  const std::string bars = svg_bar_chart("per class", {"a", "b"}, {0.5, 1.0}, "accuracy");
  EXPECT_EQ(std::count(bars.begin(), bars.end(), '\n') > 0, true);
  EXPECT_NE(bars.find("<rect"), std::string::npos);
}

}  // namespace
}  // namespace cnneelm
