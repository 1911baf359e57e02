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

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "manatee/dataset.hpp"
#include "manatee/model.hpp"

namespace manatee {

struct TrainRecipe {
  int epochs = 25;
  std::size_t batch_size = 32;
  double base_lr = 1e-3;
  double weight_decay = 5e-7;
  double snr_db = 10.0;
  bool inject_noise = true;
  std::uint64_t seed = 0;
  // Per-sample gradient buffers reduced in sample order; bitwise repeatable
  // regardless of thread count.
  bool deterministic = true;
  // Score the test split after every epoch.
  bool track_test = true;
  // Return the parameters from the epoch with the highest test F1 (earliest
  // on ties) instead of the last epoch. Needs track_test.
  bool keep_best = false;

  static TrainRecipe finetune();  // base_lr 1e-6
  void validate() const;
};

struct Metrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double threshold = 0.5;

  static Metrics from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn,
                             double threshold = 0.5);
  friend bool operator==(const Metrics&, const Metrics&) = default;
};

// Prediction is positive iff score >= threshold.
Metrics compute_metrics(std::span<const double> scores, std::span<const int> labels,
                        double threshold = 0.5);

struct PRPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  friend bool operator==(const PRPoint&, const PRPoint&) = default;
};

struct PRCurve {
  std::vector<PRPoint> points;  // thresholds descending
  double average_precision = 0.0;
};

// Sweeps every distinct score from high to low; AP = sum (R_k - R_{k-1}) P_k.
PRCurve pr_curve(std::span<const double> scores, std::span<const int> labels);
std::string pr_curve_csv(const PRCurve& curve);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  bool has_test = false;
  Metrics test;
  double seconds = 0.0;
};

struct TrainHistory {
  double initial_loss = 0.0;  // clean train split, before the first update
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Needs a split manifest with norm_stats and a nonempty train split.
TrainResult train(const DatasetManifest& manifest, const SessionRegistry& registry,
                  const ModelConfig& config, const TrainRecipe& recipe,
                  const EpochCallback& on_epoch = {});

// Clean normalized features of `indices` (manifest positions), parallel.
std::vector<FilterbankFeature> split_features(const DatasetManifest& manifest,
                                              const SessionRegistry& registry,
                                              std::span<const std::size_t> indices,
                                              const NormStats& stats);
std::vector<std::size_t> split_indices(const DatasetManifest& manifest, Split split);

std::vector<double> score_features(const Model<float>& model,
                                   std::span<const FilterbankFeature> features);

// Clean scores for manifest positions `indices`, in chunks to bound memory.
std::vector<double> score_samples(const Checkpoint& checkpoint, const DatasetManifest& manifest,
                                  const SessionRegistry& registry,
                                  std::span<const std::size_t> indices);

struct SplitScores {
  std::vector<std::size_t> indices;
  std::vector<double> scores;
  std::vector<int> labels;
};

// No noise injection; normalized with the checkpoint's stats.
SplitScores score_split(const Checkpoint& checkpoint, const DatasetManifest& manifest,
                        const SessionRegistry& registry, Split split);

Metrics evaluate(const Checkpoint& checkpoint, const DatasetManifest& manifest,
                 const SessionRegistry& registry, Split split = Split::kTest,
                 double threshold = 0.5);

// One record per line, JSON.
std::string history_to_text(const TrainHistory& history);
TrainHistory history_from_text(const std::string& text);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

struct RunSummary {
  std::size_t runs = 0;
  MeanStd precision, recall, f1;  // f1 is the mean of per-run F1
};

// Needs at least 2 runs.
RunSummary summarize_runs(std::span<const Metrics> runs);

// "Original & 0.78 ± 0.03 & 0.76 ± 0.02 & 0.77 ± 0.01"
std::string format_table_row(const std::string& name, const RunSummary& summary, int digits = 2);

// Header plus one row per arm, each arm needing at least 2 runs.
std::string compare_runs(std::span<const Metrics> arm_a, std::span<const Metrics> arm_b,
                         const std::string& name_a = "Original",
                         const std::string& name_b = "Human feedback");

}  // namespace manatee
