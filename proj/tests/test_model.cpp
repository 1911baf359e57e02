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

#include <cmath>
#include <fstream>
#include <random>

#include "manatee/errors.hpp"
#include "manatee/kernels.hpp"
#include "manatee/model.hpp"
#include "manatee/reference.hpp"
#include "test_support.hpp"

namespace manatee {
namespace {

FilterbankFeature random_feature(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  FilterbankFeature f;
  for (auto& v : f.values) v = d(rng);
  f.normalized = true;
  return f;
}

// Closed-form count for the pre-norm encoder with a linear head on [CLS].
std::size_t expected_params(std::size_t d, std::size_t layers, std::size_t tokens) {
  const std::size_t mlp = 4 * d;
  const std::size_t per_layer = 2 * d + (d * 3 * d + 3 * d) + (d * d + d) + 2 * d +
                                (d * mlp + mlp) + (mlp * d + d);
  return (256 * d + d) + d + tokens * d + layers * per_layer + 2 * d + (d + 1);
}

TEST(Geometry, SixtyPatchesSixtyOneTokens) {
  EXPECT_EQ(patch_count(64, 128, 16, 16, 10, 10), 60u);
  const ModelConfig c;
  EXPECT_EQ(c.grid_bins(), 5u);
  EXPECT_EQ(c.grid_frames(), 12u);
  EXPECT_EQ(c.tokens(), 61u);
  EXPECT_EQ(patch_count(64, 128, 16, 16, 16, 16), 32u);
  EXPECT_THROW(patch_count(64, 128, 16, 16, 0, 10), ArgumentError);
}

TEST(Geometry, ParameterCounts) {
  EXPECT_EQ(parameter_count(ModelConfig::desk()), expected_params(64, 2, 61));
  EXPECT_EQ(parameter_count(ModelConfig::desk()), 120577u);
  EXPECT_EQ(parameter_count(ModelConfig::base()), expected_params(768, 12, 61));
  EXPECT_EQ(parameter_count(ModelConfig::tiny()), expected_params(16, 1, 61));
}

TEST(Geometry, RejectsIndivisibleHeads) {
  ModelConfig c;
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ArgumentError);
}

TEST(Patchify, TileContentsAndOrder) {
  FilterbankFeature f;
  for (std::size_t b = 0; b < kMelBins; ++b) {
    for (std::size_t t = 0; t < kFrames; ++t) f.at(b, t) = 1000.0 * b + t;
  }
  f.normalized = true;
  const auto tiles = patchify(f);
  ASSERT_EQ(tiles.size(), 60u);
  ASSERT_EQ(tiles[0].size(), 256u);
  // tile 13 = bin row 1 (start 10), frame column 1 (start 10)
  EXPECT_EQ(tiles[13][0], 1000.0 * 10 + 10);
  EXPECT_EQ(tiles[13][255], 1000.0 * 25 + 25);
  EXPECT_EQ(tiles[59][0], 1000.0 * 40 + 110);
  FilterbankFeature raw;
  EXPECT_THROW(patchify(raw), StateError);
}

TEST(Kernels, LinearMatchesReference) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d;
  const std::size_t rows = 61, in = 64, out = 192;
  std::vector<double> x(rows * in), w(in * out), b(out), y1(rows * out), y2(rows * out);
  for (auto* v : {&x, &w, &b}) for (auto& e : *v) e = d(rng);
  kernels::linear<double>(x, w, b, y1, rows, in, out);
  reference::linear<double>(x, w, b, y2, rows, in, out);
  for (std::size_t i = 0; i < y1.size(); ++i) ASSERT_NEAR(y1[i], y2[i], 1e-12);
}

TEST(Kernels, AttentionMatchesReference) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> d;
  const std::size_t s = 61, dim = 16;
  std::vector<double> q(s * dim), k(s * dim), v(s * dim), p1(s * s), p2(s * s), o1(s * dim),
      o2(s * dim);
  for (auto* a : {&q, &k, &v}) for (auto& e : *a) e = d(rng);
  kernels::attention<double>(q, k, v, p1, o1, s, dim);
  reference::attention<double>(q, k, v, p2, o2, s, dim);
  for (std::size_t i = 0; i < o1.size(); ++i) ASSERT_NEAR(o1[i], o2[i], 1e-12);
  for (std::size_t r = 0; r < s; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < s; ++c) sum += p1[r * s + c];
    ASSERT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Forward, ScoreInUnitIntervalAndDeterministicInit) {
  Model<float> a(ModelConfig::desk()), b(ModelConfig::desk());
  a.initialize(5);
  b.initialize(5);
  EXPECT_EQ(a.parameters(), b.parameters());
  const auto f = random_feature(1);
  const double s = a.score(f);
  EXPECT_GT(s, 0.0);
  EXPECT_LT(s, 1.0);
  EXPECT_EQ(s, b.score(f));
  b.initialize(6);
  EXPECT_NE(a.parameters(), b.parameters());
}

TEST(Forward, InitialisationShape) {
  Model<double> m(ModelConfig::desk());
  m.initialize(1);
  for (double g : m.tensor("final.gain")) EXPECT_EQ(g, 1.0);
  for (double b : m.tensor("head.b")) EXPECT_EQ(b, 0.0);
  for (double w : m.tensor("patch.w")) ASSERT_LE(std::abs(w), 0.04 + 1e-12);
}

TEST(Forward, RejectsUnnormalizedAndNonFinite) {
  Model<float> m(ModelConfig::tiny());
  m.initialize(1);
  FilterbankFeature raw;
  EXPECT_THROW(m.score(raw), StateError);
  m.parameters()[0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(m.score(random_feature(2)), NumericError);
}

double loss_of(const Model<double>& m, const FilterbankFeature& f, int label,
               const ClassWeights& w) {
  return weighted_bce(m.score(f), label, w);
}

// Central differences over every parameter of the tiny model in double.
void gradient_check(int label) {
  Model<double> m(ModelConfig::tiny());
  m.initialize(11);
  // Nonzero biases and gains so that every path carries gradient.
  std::mt19937_64 rng(3);
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (auto& p : m.parameters()) p += jitter(rng);
  const auto f = random_feature(4);
  const ClassWeights w{1.0, 0.7};
  Workspace<double> ws(m.config());
  std::vector<double> grad(m.parameters().size(), 0.0);
  loss_and_gradient<double>(m, f, label, w, ws, std::span<double>(grad));
  const double h = 1e-4;
  double worst = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double keep = m.parameters()[i];
    m.parameters()[i] = keep + h;
    const double up = loss_of(m, f, label, w);
    m.parameters()[i] = keep - h;
    const double down = loss_of(m, f, label, w);
    m.parameters()[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(numeric - grad[i]) / std::max(1e-6, std::abs(numeric) + std::abs(grad[i]));
    worst = std::max(worst, err);
    ASSERT_LT(err, 1e-4) << "parameter " << i << " analytic " << grad[i] << " numeric " << numeric;
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Backward, GradientCheckPositive) { gradient_check(1); }
TEST(Backward, GradientCheckNegative) { gradient_check(0); }

TEST(Loss, WeightedBceAndClamp) {
  const ClassWeights w{1.0, 0.25};
  EXPECT_NEAR(weighted_bce(0.8, 1, w), -std::log(0.8), 1e-15);
  EXPECT_NEAR(weighted_bce(0.8, 0, w), -0.25 * std::log(0.2), 1e-15);
  EXPECT_NEAR(weighted_bce(0.0, 1, w), -std::log(kScoreClamp), 1e-9);
  EXPECT_TRUE(std::isfinite(weighted_bce(1.0, 0, w)));
  EXPECT_NEAR(weighted_bce_logit_grad(0.8, 1, w), -0.2, 1e-15);
  EXPECT_NEAR(weighted_bce_logit_grad(0.8, 0, w), 0.2, 1e-15);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p = {1.0, -2.0, 0.5};
  const std::vector<double> g = {0.3, -4.0, 0.0};
  AdamState<double> st(3);
  const double lr = 1e-3;
  AdamOptions opt;
  adam_step<double>(std::span<double>(p), std::span<const double>(g), st, lr, opt);
  // decoupled decay first, then the bias-corrected step m/sqrt(v) = sign(g)
  const double d0 = 1.0 - lr * opt.weight_decay * 1.0;
  EXPECT_NEAR(p[0], d0 - lr * 0.3 / (0.3 + opt.eps), 1e-15);
  EXPECT_NEAR(p[1], -2.0 + lr * opt.weight_decay * 2.0 + lr * 4.0 / (4.0 + opt.eps), 1e-15);
  EXPECT_NEAR(p[2], 0.5 - lr * opt.weight_decay * 0.5, 1e-15);
  EXPECT_EQ(st.step, 1u);
  std::vector<double> wrong(2);
  EXPECT_THROW(adam_step<double>(std::span<double>(wrong), std::span<const double>(g), st, lr),
               ShapeError);
}

TEST(Adam, StepDecreasesAQuadratic) {
  std::vector<double> p = {3.0};
  AdamState<double> st(1);
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> g = {2.0 * p[0]};
    adam_step<double>(std::span<double>(p), std::span<const double>(g), st, 1e-2);
  }
  EXPECT_LT(std::abs(p[0]), 0.05);
}

TEST(Schedule, HalvesEveryFiveEpochs) {
  EXPECT_EQ(lr_at_epoch(1e-6, 0), 1e-6);
  EXPECT_EQ(lr_at_epoch(1e-6, 4), 1e-6);
  EXPECT_EQ(lr_at_epoch(1e-6, 5), 5e-7);
  EXPECT_EQ(lr_at_epoch(1e-6, 14), 2.5e-7);
  EXPECT_EQ(lr_at_epoch(1e-6, 24), 6.25e-8);
  EXPECT_THROW(lr_at_epoch(1e-6, -1), ArgumentError);
}

Checkpoint sample_checkpoint() {
  Checkpoint ck;
  ck.config = ModelConfig::tiny();
  Model<float> m(ck.config);
  m.initialize(9);
  ck.parameters = m.parameters();
  ck.optimizer = AdamState<float>(ck.parameters.size());
  ck.optimizer.m[3] = 0.25f;
  ck.optimizer.v[4] = 0.5f;
  ck.optimizer.step = 17;
  ck.epoch = 7;
  ck.norm_stats = {-12.5, 3.25};
  return ck;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  testing::TempDir dir("ck");
  const auto ck = sample_checkpoint();
  save_checkpoint(dir / "a.bin", ck);
  const auto back = load_checkpoint(dir / "a.bin", ModelConfig::tiny());
  EXPECT_EQ(back.parameters, ck.parameters);
  EXPECT_EQ(back.optimizer.m, ck.optimizer.m);
  EXPECT_EQ(back.optimizer.v, ck.optimizer.v);
  EXPECT_EQ(back.optimizer.step, 17u);
  EXPECT_EQ(back.epoch, 7);
  EXPECT_EQ(back.norm_stats, ck.norm_stats);
  EXPECT_EQ(back.config, ck.config);
  const auto f = random_feature(3);
  EXPECT_EQ(back.model().score(f), ck.model().score(f));
}

TEST(Checkpoint, CorruptionTruncationAndMismatch) {
  testing::TempDir dir("ckbad");
  save_checkpoint(dir / "a.bin", sample_checkpoint());
  std::string bytes;
  {
    std::ifstream in(dir / "a.bin", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& name, const std::string& b) {
    std::ofstream(dir / name, std::ios::binary) << b;
    return dir / name;
  };
  std::string flipped = bytes;
  flipped[flipped.size() - 100] ^= 0x40;
  EXPECT_THROW(load_checkpoint(write("flip.bin", flipped)), FormatError);
  EXPECT_THROW(load_checkpoint(write("short.bin", bytes.substr(0, bytes.size() / 2))), FormatError);
  EXPECT_THROW(load_checkpoint(write("junk.bin", "not a checkpoint")), FormatError);
  try {
    load_checkpoint(dir / "a.bin", ModelConfig::desk());
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("embed_dim"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_checkpoint(dir / "missing.bin"), IoError);
}

}  // namespace
}  // namespace manatee
