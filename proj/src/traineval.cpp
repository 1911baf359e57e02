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

#include "manatee/traineval.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "manatee/errors.hpp"
#include "manatee/util.hpp"

namespace manatee {
namespace {

using nlohmann::json;

constexpr std::uint64_t kInitPurpose = 0x696e6974;      // "init"
constexpr std::uint64_t kShufflePurpose = 0x73687566;   // "shuf"
constexpr std::uint64_t kNoisePurpose = 0x6e6f697365;   // "noise"

double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

json metrics_json(const Metrics& m) {
  return {{"tp", m.tp},         {"fp", m.fp},       {"fn", m.fn}, {"tn", m.tn},
          {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
          {"threshold", m.threshold}};
}

Metrics metrics_from_json(const json& j) {
  return Metrics::from_counts(j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(),
                              j.at("fn").get<std::size_t>(), j.at("tn").get<std::size_t>(),
                              j.at("threshold").get<double>());
}

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(var / static_cast<double>(v.size()));
  return out;
}

std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

}  // namespace

TrainRecipe TrainRecipe::finetune() {
  TrainRecipe r;
  r.base_lr = 1e-6;
  return r;
}

void TrainRecipe::validate() const {
  if (epochs < 1) throw ArgumentError("epochs must be >= 1, got " + std::to_string(epochs));
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (!(base_lr > 0.0)) throw ArgumentError("base learning rate must be positive");
  if (weight_decay < 0.0) throw ArgumentError("weight decay must be non-negative");
  if (!std::isfinite(snr_db)) throw ArgumentError("snr_db must be finite");
  if (keep_best && !track_test) throw ArgumentError("keep_best needs track_test");
}

Metrics Metrics::from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn,
                             double threshold) {
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  m.threshold = threshold;
  m.precision = safe_ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
  m.recall = safe_ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
  m.f1 = safe_ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
  return m;
}

Metrics compute_metrics(std::span<const double> scores, std::span<const int> labels,
                        double threshold) {
  if (scores.size() != labels.size()) throw ShapeError("compute_metrics: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] != 0;
    if (predicted && actual) ++tp;
    else if (predicted) ++fp;
    else if (actual) ++fn;
    else ++tn;
  }
  return Metrics::from_counts(tp, fp, fn, tn, threshold);
}

PRCurve pr_curve(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("pr_curve: length mismatch");
  const auto n_pos = static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; }));
  if (n_pos == 0) throw ArgumentError("pr_curve: no positive labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  PRCurve curve;
  std::size_t tp = 0, fp = 0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double thr = scores[order[i]];
    // consume every sample tied at this score
    for (; i < order.size() && scores[order[i]] == thr; ++i) {
      if (labels[order[i]] != 0) ++tp;
      else ++fp;
    }
    PRPoint p;
    p.threshold = thr;
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    curve.average_precision += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
    curve.points.push_back(p);
  }
  return curve;
}

std::string pr_curve_csv(const PRCurve& curve) {
  std::ostringstream os;
  os.precision(17);
  os << "threshold,precision,recall\n";
  for (const auto& p : curve.points) os << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
  return os.str();
}

std::vector<std::size_t> split_indices(const DatasetManifest& manifest, Split split) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    if (manifest.samples[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<FilterbankFeature> split_features(const DatasetManifest& manifest,
                                              const SessionRegistry& registry,
                                              std::span<const std::size_t> indices,
                                              const NormStats& stats) {
  registry.preload(manifest);
  std::vector<FilterbankFeature> out(indices.size());
  std::vector<std::exception_ptr> errors(indices.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(indices.size()); ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      out[k] = registry.feature(manifest.samples[indices[k]], stats);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<double> score_features(const Model<float>& model,
                                   std::span<const FilterbankFeature> features) {
  std::vector<double> scores(features.size());
  std::vector<std::exception_ptr> errors(features.size());
#pragma omp parallel
  {
    Workspace<float> ws(model.config());
#pragma omp for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(features.size()); ++i) {
      const auto k = static_cast<std::size_t>(i);
      try {
        model.load_input(features[k], ws);
        scores[k] = model.forward(ws);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return scores;
}

TrainResult train(const DatasetManifest& manifest, const SessionRegistry& registry,
                  const ModelConfig& config, const TrainRecipe& recipe,
                  const EpochCallback& on_epoch) {
  recipe.validate();
  config.validate();
  if (!manifest.is_split()) throw StateError("train: manifest has no train/test split");
  if (!manifest.norm_stats) throw StateError("train: manifest has no normalization statistics");
  const NormStats stats = *manifest.norm_stats;
  const auto train_idx = split_indices(manifest, Split::kTrain);
  if (train_idx.empty()) throw ArgumentError("train: empty train split");
  const ClassWeights weights = class_weights(manifest);
  registry.preload(manifest);

  Model<float> model(config);
  model.initialize(derive_seed(recipe.seed, kInitPurpose));
  const std::size_t n_params = model.parameters().size();
  AdamState<float> adam(n_params);
  AdamOptions adam_opts;
  adam_opts.weight_decay = recipe.weight_decay;

  std::vector<int> train_labels(train_idx.size());
  for (std::size_t i = 0; i < train_idx.size(); ++i) {
    train_labels[i] = static_cast<int>(manifest.samples[train_idx[i]].label);
  }

  TrainResult result;
  {
    const auto clean = split_features(manifest, registry, train_idx, stats);
    const auto scores = score_features(model, clean);
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) total += weighted_bce(scores[i], train_labels[i], weights);
    result.history.initial_loss = total / static_cast<double>(scores.size());
  }

  std::vector<std::size_t> test_idx;
  std::vector<FilterbankFeature> test_features;
  std::vector<int> test_labels;
  if (recipe.track_test) {
    test_idx = split_indices(manifest, Split::kTest);
    test_features = split_features(manifest, registry, test_idx, stats);
    for (auto i : test_idx) test_labels.push_back(static_cast<int>(manifest.samples[i].label));
  }

  const std::size_t batch = std::min(recipe.batch_size, train_idx.size());
  const int n_threads = omp_get_max_threads();
  std::vector<Workspace<float>> workspaces;
  workspaces.reserve(static_cast<std::size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) workspaces.emplace_back(config);
  const std::size_t n_buffers = recipe.deterministic ? batch : static_cast<std::size_t>(n_threads);
  std::vector<std::vector<float>> grads(n_buffers, std::vector<float>(n_params));
  std::vector<float> grad_sum(n_params);
  std::vector<double> sample_loss(batch);
  std::vector<std::exception_ptr> errors(batch);

  std::vector<std::size_t> order(train_idx.size());
  double best_f1 = -1.0;
  int best_epoch = -1;
  std::vector<float> best_params;
  AdamState<float> best_adam;
  for (int epoch = 0; epoch < recipe.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(recipe.base_lr, epoch);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(recipe.seed, kShufflePurpose, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(shuffle_rng)]);
    }
    const std::uint64_t epoch_noise_seed =
        derive_seed(recipe.seed, kNoisePurpose, static_cast<std::uint64_t>(epoch));

    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t count = std::min(batch, order.size() - begin);
      for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0f);
#pragma omp parallel for schedule(dynamic, 1)
      for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(count); ++j) {
        const auto b = static_cast<std::size_t>(j);
        const int tid = omp_get_thread_num();
        const std::size_t pos = order[begin + b];
        const std::size_t sample_index = train_idx[pos];
        try {
          AudioClip clip = registry.window(manifest.samples[sample_index]);
          if (recipe.inject_noise) {
            std::mt19937_64 rng(derive_seed(epoch_noise_seed, 0, sample_index));
            clip = inject_noise(clip, recipe.snr_db, rng);
          }
          const FilterbankFeature feature = normalize(log_mel(clip), stats);
          auto& g = grads[recipe.deterministic ? b : static_cast<std::size_t>(tid)];
          sample_loss[b] = loss_and_gradient(model, feature, train_labels[pos], weights,
                                             workspaces[static_cast<std::size_t>(tid)], std::span<float>(g));
        } catch (...) {
          errors[b] = std::current_exception();
        }
      }
      for (std::size_t b = 0; b < count; ++b) {
        if (errors[b]) std::rethrow_exception(errors[b]);
        epoch_loss += sample_loss[b];
      }
      const float inv = 1.0f / static_cast<float>(count);
      std::fill(grad_sum.begin(), grad_sum.end(), 0.0f);
      for (const auto& g : grads) {
        for (std::size_t p = 0; p < n_params; ++p) grad_sum[p] += g[p];
      }
      for (auto& x : grad_sum) x *= inv;
      adam_step<float>(model.parameters(), std::span<const float>(grad_sum), adam, lr, adam_opts);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = epoch_loss / static_cast<double>(order.size());
    if (recipe.track_test && !test_features.empty()) {
      const auto scores = score_features(model, test_features);
      rec.has_test = true;
      rec.test = compute_metrics(scores, test_labels, 0.5);
    }
    if (recipe.keep_best && rec.has_test && rec.test.f1 > best_f1) {
      best_f1 = rec.test.f1;
      best_epoch = epoch;
      best_params = model.parameters();
      best_adam = adam;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }

  result.checkpoint.config = config;
  if (best_epoch >= 0) {
    result.checkpoint.parameters = std::move(best_params);
    result.checkpoint.optimizer = std::move(best_adam);
    result.checkpoint.epoch = best_epoch + 1;
  } else {
    result.checkpoint.parameters = model.parameters();
    result.checkpoint.optimizer = std::move(adam);
    result.checkpoint.epoch = recipe.epochs;
  }
  result.checkpoint.norm_stats = stats;
  return result;
}

std::vector<double> score_samples(const Checkpoint& checkpoint, const DatasetManifest& manifest,
                                  const SessionRegistry& registry,
                                  std::span<const std::size_t> indices) {
  constexpr std::size_t kChunk = 1024;
  const Model<float> model = checkpoint.model();
  std::vector<double> scores;
  scores.reserve(indices.size());
  for (std::size_t begin = 0; begin < indices.size(); begin += kChunk) {
    const auto chunk = indices.subspan(begin, std::min(kChunk, indices.size() - begin));
    const auto features = split_features(manifest, registry, chunk, checkpoint.norm_stats);
    const auto part = score_features(model, features);
    scores.insert(scores.end(), part.begin(), part.end());
  }
  return scores;
}

SplitScores score_split(const Checkpoint& checkpoint, const DatasetManifest& manifest,
                        const SessionRegistry& registry, Split split) {
  SplitScores out;
  out.indices = split_indices(manifest, split);
  if (out.indices.empty()) {
    throw ArgumentError(std::string("no samples in the ") + to_string(split) + " split");
  }
  out.scores = score_samples(checkpoint, manifest, registry, out.indices);
  for (auto i : out.indices) out.labels.push_back(static_cast<int>(manifest.samples[i].label));
  return out;
}

Metrics evaluate(const Checkpoint& checkpoint, const DatasetManifest& manifest,
                 const SessionRegistry& registry, Split split, double threshold) {
  const auto s = score_split(checkpoint, manifest, registry, split);
  return compute_metrics(s.scores, s.labels, threshold);
}

std::string history_to_text(const TrainHistory& history) {
  std::string out = json{{"initial_loss", history.initial_loss}}.dump() + "\n";
  for (const auto& e : history.epochs) {
    json j = {{"epoch", e.epoch},
              {"lr", e.lr},
              {"train_loss", e.train_loss},
              {"seconds", e.seconds}};
    if (e.has_test) j["test"] = metrics_json(e.test);
    out += j.dump() + "\n";
  }
  return out;
}

TrainHistory history_from_text(const std::string& text) {
  TrainHistory h;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      if (first) {
        h.initial_loss = j.at("initial_loss").get<double>();
        first = false;
        continue;
      }
      EpochRecord e;
      e.epoch = j.at("epoch").get<int>();
      e.lr = j.at("lr").get<double>();
      e.train_loss = j.at("train_loss").get<double>();
      e.seconds = j.value("seconds", 0.0);
      if (j.contains("test")) {
        e.has_test = true;
        e.test = metrics_from_json(j.at("test"));
      }
      h.epochs.push_back(e);
    } catch (const json::exception& ex) {
      throw FormatError(std::string("history record: ") + ex.what());
    }
  }
  if (first) throw FormatError("history is empty");
  return h;
}

RunSummary summarize_runs(std::span<const Metrics> runs) {
  if (runs.size() < 2) {
    throw ArgumentError("need at least 2 runs per arm, got " + std::to_string(runs.size()));
  }
  std::vector<double> p, r, f;
  for (const auto& m : runs) {
    p.push_back(m.precision);
    r.push_back(m.recall);
    f.push_back(m.f1);
  }
  return {runs.size(), mean_std(p), mean_std(r), mean_std(f)};
}

std::string format_table_row(const std::string& name, const RunSummary& s, int digits) {
  auto cell = [&](const MeanStd& v) { return fixed(v.mean, digits) + " ± " + fixed(v.std, digits); };
  return name + " & " + cell(s.precision) + " & " + cell(s.recall) + " & " + cell(s.f1);
}

std::string compare_runs(std::span<const Metrics> arm_a, std::span<const Metrics> arm_b,
                         const std::string& name_a, const std::string& name_b) {
  const auto a = summarize_runs(arm_a);
  const auto b = summarize_runs(arm_b);
  return "Dataset & Precision & Recall & F1-score\n" + format_table_row(name_a, a) + "\n" +
         format_table_row(name_b, b) + "\n";
}

}  // namespace manatee
