// Copyright 2026 The Manatee AST Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>

#include "manatee/errors.hpp"
#include "manatee/traineval.hpp"
#include "test_support.hpp"

namespace manatee {
namespace {

TEST(Metrics, ConfusionArithmetic) {
  const auto m = Metrics::from_counts(91, 9, 6, 100);
  EXPECT_NEAR(m.precision, 0.910, 5e-4);
  EXPECT_NEAR(m.recall, 0.938, 5e-4);
  EXPECT_NEAR(m.f1, 0.924, 5e-4);
  const auto none = Metrics::from_counts(0, 0, 0, 10);
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_EQ(none.f1, 0.0);
}

TEST(Metrics, ThresholdIsInclusive) {
  const std::vector<double> s = {0.5, 0.49, 0.9, 0.1};
  const std::vector<int> y = {1, 1, 0, 0};
  const auto m = compute_metrics(s, y, 0.5);
  EXPECT_EQ(m.tp, 1u);
  EXPECT_EQ(m.fn, 1u);
  EXPECT_EQ(m.fp, 1u);
  EXPECT_EQ(m.tn, 1u);
  const std::vector<int> perfect = {1, 1, 1, 0};
  const std::vector<double> ps = {0.9, 0.8, 0.6, 0.1};
  const auto p = compute_metrics(ps, perfect);
  EXPECT_EQ(p.f1, 1.0);
  EXPECT_THROW(compute_metrics(s, std::vector<int>{1}), ShapeError);
}

TEST(Metrics, SwappingFpAndFnKeepsF1WhenPrecisionEqualsRecall) {
  const auto a = Metrics::from_counts(40, 10, 10, 5);
  const auto b = Metrics::from_counts(40, 10, 10, 5);
  EXPECT_EQ(a.f1, b.f1);
  const auto c = Metrics::from_counts(40, 5, 12, 5);
  const auto d = Metrics::from_counts(40, 12, 5, 5);
  EXPECT_NEAR(c.f1, d.f1, 1e-15);
}

TEST(PR, WorkedExample) {
  const std::vector<double> s = {0.9, 0.8, 0.7};
  const std::vector<int> y = {1, 0, 1};
  const auto c = pr_curve(s, y);
  ASSERT_EQ(c.points.size(), 3u);
  EXPECT_EQ(c.points[0].precision, 1.0);
  EXPECT_EQ(c.points[1].precision, 0.5);
  EXPECT_NEAR(c.points[2].precision, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(c.points[0].recall, 0.5);
  EXPECT_EQ(c.points[2].recall, 1.0);
  EXPECT_NEAR(c.average_precision, 0.8333, 5e-5);
}

TEST(PR, PerfectSeparationAndNoPositives) {
  const std::vector<double> s = {1, 1, 0, 0};
  const std::vector<int> y = {1, 1, 0, 0};
  EXPECT_EQ(pr_curve(s, y).average_precision, 1.0);
  const std::vector<int> none = {0, 0, 0, 0};
  EXPECT_THROW(pr_curve(s, none), ArgumentError);
}

struct OraclePoint {
  double threshold, precision, recall;
};

// Recounts the confusion matrix at every distinct score.
std::vector<OraclePoint> oracle_sweep(const std::vector<double>& s, const std::vector<int>& y,
                                      double* ap) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  std::size_t pos = 0;
  for (int v : y) pos += v;
  std::vector<OraclePoint> out;
  double prev_r = 0.0;
  *ap = 0.0;
  for (double t : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) (y[i] ? tp : fp) += 1;
    }
    const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double r = static_cast<double>(tp) / static_cast<double>(pos);
    out.push_back({t, p, r});
    *ap += (r - prev_r) * p;
    prev_r = r;
  }
  return out;
}

TEST(PR, MatchesBruteForceOracle) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 60)(rng);
    const int levels = std::uniform_int_distribution<int>(2, 30)(rng);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = std::uniform_int_distribution<int>(0, levels)(rng) / static_cast<double>(levels);
      y[i] = std::bernoulli_distribution(0.4)(rng);
    }
    y[0] = 1;
    double ap = 0.0;
    const auto oracle = oracle_sweep(s, y, &ap);
    const auto c = pr_curve(s, y);
    ASSERT_EQ(c.points.size(), oracle.size());
    for (std::size_t k = 0; k < oracle.size(); ++k) {
      ASSERT_EQ(c.points[k].threshold, oracle[k].threshold);
      ASSERT_EQ(c.points[k].precision, oracle[k].precision);
      ASSERT_EQ(c.points[k].recall, oracle[k].recall);
      if (k > 0) {
        ASSERT_GE(c.points[k].recall, c.points[k - 1].recall);
      }
    }
    ASSERT_EQ(c.average_precision, ap) << "trial " << trial;
  }
}

TEST(PR, TrailingNegativeLeavesApUnchanged) {
  std::vector<double> s = {0.9, 0.4, 0.6, 0.3};
  std::vector<int> y = {1, 1, 0, 0};
  const double before = pr_curve(s, y).average_precision;
  s.push_back(0.01);
  y.push_back(0);
  EXPECT_EQ(pr_curve(s, y).average_precision, before);
}

TEST(PR, CsvHeader) {
  const std::vector<double> s = {0.9, 0.8};
  const std::vector<int> y = {1, 0};
  const auto csv = pr_curve_csv(pr_curve(s, y));
  EXPECT_EQ(csv.rfind("threshold,precision,recall\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

Metrics run(double p, double r, double f1) {
  Metrics m;
  m.precision = p;
  m.recall = r;
  m.f1 = f1;
  return m;
}

TEST(Summary, PopulationStdAndPerRunF1) {
  const std::vector<Metrics> runs = {run(0.9, 0.9, 0.90), run(0.9, 0.9, 0.94)};
  const auto s = summarize_runs(runs);
  EXPECT_NEAR(s.f1.mean, 0.92, 1e-12);
  EXPECT_NEAR(s.f1.std, 0.02, 1e-12);
  EXPECT_EQ(s.precision.std, 0.0);
  const std::vector<Metrics> one = {run(1, 1, 1)};
  EXPECT_THROW(summarize_runs(one), ArgumentError);
}

TEST(Summary, CompareRunsMatchesGoldenFile) {
  const std::vector<Metrics> a = {run(0.75, 0.74, 0.76), run(0.81, 0.78, 0.78)};
  const std::vector<Metrics> b = {run(0.90, 0.94, 0.93), run(0.92, 0.94, 0.93)};
  std::ifstream in(std::string(MANATEE_TEST_DATA) + "/compare_runs.txt", std::ios::binary);
  ASSERT_TRUE(in) << "missing golden file";
  const std::string golden((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(compare_runs(a, b), golden);
}

TEST(History, TextRoundTrip) {
  TrainHistory h;
  h.initial_loss = 0.6931;
  EpochRecord e;
  e.epoch = 1;
  e.lr = 1e-3;
  e.train_loss = 0.25;
  e.has_test = true;
  e.test = Metrics::from_counts(3, 1, 2, 10);
  e.seconds = 1.5;
  h.epochs = {e};
  const auto back = history_from_text(history_to_text(h));
  EXPECT_EQ(back.initial_loss, h.initial_loss);
  ASSERT_EQ(back.epochs.size(), 1u);
  EXPECT_EQ(back.epochs[0].test, e.test);
  EXPECT_EQ(back.epochs[0].train_loss, 0.25);
}

TEST(Recipe, Validation) {
  TrainRecipe r;
  EXPECT_NO_THROW(r.validate());
  r.epochs = 0;
  EXPECT_THROW(r.validate(), ArgumentError);
  r = TrainRecipe{};
  r.batch_size = 0;
  EXPECT_THROW(r.validate(), ArgumentError);
  EXPECT_EQ(TrainRecipe::finetune().base_lr, 1e-6);
  r = TrainRecipe{};
  r.keep_best = true;
  r.track_test = false;
  EXPECT_THROW(r.validate(), ArgumentError);
}

class SmallTraining : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("train");
    testing::small_registry(dir_->path(), 3, 8.0, 21);
    reg_ = new SessionRegistry(dir_->path());
    manifest_ = new DatasetManifest(split_train_test(build_manifest(*reg_), 0.7, 2, *reg_));
  }
  static void TearDownTestSuite() {
    delete manifest_;
    delete reg_;
    delete dir_;
  }
  static TrainRecipe recipe() {
    TrainRecipe r;
    r.epochs = 2;
    r.batch_size = 8;
    r.seed = 4;
    return r;
  }
  static testing::TempDir* dir_;
  static SessionRegistry* reg_;
  static DatasetManifest* manifest_;
};
testing::TempDir* SmallTraining::dir_ = nullptr;
SessionRegistry* SmallTraining::reg_ = nullptr;
DatasetManifest* SmallTraining::manifest_ = nullptr;

TEST_F(SmallTraining, DeterministicModeIsBitwiseRepeatable) {
  const auto a = train(*manifest_, *reg_, ModelConfig::tiny(), recipe());
  const auto b = train(*manifest_, *reg_, ModelConfig::tiny(), recipe());
  EXPECT_EQ(a.checkpoint.parameters, b.checkpoint.parameters);
  EXPECT_EQ(a.history.initial_loss, b.history.initial_loss);
  ASSERT_EQ(a.history.epochs.size(), b.history.epochs.size());
  for (std::size_t e = 0; e < a.history.epochs.size(); ++e) {
    EXPECT_EQ(a.history.epochs[e].train_loss, b.history.epochs[e].train_loss);
    EXPECT_EQ(a.history.epochs[e].test, b.history.epochs[e].test);
  }
  ASSERT_EQ(a.history.epochs.size(), 2u);
  EXPECT_EQ(a.checkpoint.epoch, 2);
  EXPECT_EQ(a.checkpoint.norm_stats, *manifest_->norm_stats);
  auto other = recipe();
  other.seed = 5;
  EXPECT_NE(train(*manifest_, *reg_, ModelConfig::tiny(), other).checkpoint.parameters,
            a.checkpoint.parameters);
}

TEST_F(SmallTraining, EvaluateAgreesWithScoresAndNeedsSamples) {
  const auto r = train(*manifest_, *reg_, ModelConfig::tiny(), recipe());
  const auto scores = score_split(r.checkpoint, *manifest_, *reg_, Split::kTest);
  const auto m = evaluate(r.checkpoint, *manifest_, *reg_, Split::kTest);
  EXPECT_EQ(m, compute_metrics(scores.scores, scores.labels));
  EXPECT_EQ(m.tp + m.fp + m.fn + m.tn, manifest_->counts(Split::kTest).total());
  EXPECT_EQ(r.history.epochs.back().test, m);
  DatasetManifest empty = *manifest_;
  for (auto& s : empty.samples) s.split = Split::kTrain;
  EXPECT_THROW(evaluate(r.checkpoint, empty, *reg_, Split::kTest), ArgumentError);
}

TEST_F(SmallTraining, KeepBestReturnsTheEarliestBestEpoch) {
  auto r = recipe();
  r.epochs = 3;
  r.keep_best = true;
  const auto best = train(*manifest_, *reg_, ModelConfig::tiny(), r);
  const auto& h = best.history.epochs;
  ASSERT_EQ(h.size(), 3u);
  std::size_t arg = 0;
  for (std::size_t e = 1; e < h.size(); ++e) {
    if (h[e].test.f1 > h[arg].test.f1) arg = e;
  }
  EXPECT_EQ(best.checkpoint.epoch, static_cast<int>(arg) + 1);
  EXPECT_EQ(evaluate(best.checkpoint, *manifest_, *reg_, Split::kTest), h[arg].test);

  // identical to a plain run stopped at that epoch
  r.keep_best = false;
  r.epochs = static_cast<int>(arg) + 1;
  const auto plain = train(*manifest_, *reg_, ModelConfig::tiny(), r);
  EXPECT_EQ(best.checkpoint.parameters, plain.checkpoint.parameters);
  EXPECT_EQ(best.checkpoint.optimizer.m, plain.checkpoint.optimizer.m);
  EXPECT_EQ(best.checkpoint.optimizer.step, plain.checkpoint.optimizer.step);
}

TEST_F(SmallTraining, RejectsUnsplitManifestAndZeroEpochs) {
  auto r = recipe();
  r.epochs = 0;
  EXPECT_THROW(train(*manifest_, *reg_, ModelConfig::tiny(), r), ArgumentError);
  DatasetManifest unsplit = build_manifest(*reg_);
  EXPECT_THROW(train(unsplit, *reg_, ModelConfig::tiny(), recipe()), Error);
}

}  // namespace
}  // namespace manatee
