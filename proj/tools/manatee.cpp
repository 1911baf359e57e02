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

// Command-line entry point for the manatee call detector.

#include <CLI11.hpp>

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "manatee/dataset.hpp"
#include "manatee/errors.hpp"
#include "manatee/feedback.hpp"
#include "manatee/model.hpp"
#include "manatee/server.hpp"
#include "manatee/synth.hpp"
#include "manatee/traineval.hpp"
#include "manatee/util.hpp"

namespace fs = std::filesystem;
using namespace manatee;

namespace {

ReviewServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

ModelConfig model_by_name(const std::string& name) {
  if (name == "desk") return ModelConfig::desk();
  if (name == "tiny") return ModelConfig::tiny();
  if (name == "base") return ModelConfig::base();
  throw ArgumentError("unknown model size '" + name + "' (desk, tiny, base)");
}

TrainRecipe recipe_from_file(const fs::path& path, TrainRecipe r) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(path.string() + ": " + e.what());
  }
  for (const auto& [key, v] : j.items()) {
    if (key == "epochs") r.epochs = v.get<int>();
    else if (key == "batch_size") r.batch_size = v.get<std::size_t>();
    else if (key == "base_lr") r.base_lr = v.get<double>();
    else if (key == "weight_decay") r.weight_decay = v.get<double>();
    else if (key == "snr_db") r.snr_db = v.get<double>();
    else if (key == "inject_noise") r.inject_noise = v.get<bool>();
    else if (key == "seed") r.seed = v.get<std::uint64_t>();
    else if (key == "deterministic") r.deterministic = v.get<bool>();
    else if (key == "keep_best") r.keep_best = v.get<bool>();
    else throw ArgumentError(path.string() + ": unknown recipe key '" + key + "'");
  }
  return r;
}

// Flags shared by `train` and `experiment feedback`.
struct RecipeFlags {
  std::string file;
  std::optional<int> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<double> snr_db;
  std::optional<std::uint64_t> seed;
  std::optional<bool> deterministic;
  std::optional<bool> keep_best;
  std::string model = "desk";

  void attach(CLI::App* app) {
    app->add_option("--recipe", file, "JSON file with TrainRecipe fields")->check(CLI::ExistingFile);
    app->add_option("--epochs", epochs, "training epochs (default 25)");
    app->add_option("--batch-size", batch_size, "minibatch size (default 32)");
    app->add_option("--lr", lr, "base learning rate (default 1e-3)");
    app->add_option("--snr-db", snr_db, "noise injection SNR in dB (default 10)");
    app->add_option("--seed", seed, "training seed");
    app->add_flag("--deterministic,!--no-deterministic", deterministic,
                  "reduce per-sample gradients in sample order (default on)");
    app->add_flag("--keep-best,!--no-keep-best", keep_best,
                  "keep the epoch with the best test F1 instead of the last");
    app->add_option("--model", model, "model size: desk, tiny or base")
        ->check(CLI::IsMember({"desk", "tiny", "base"}));
  }

  TrainRecipe resolve(const TrainRecipe& base = {}) const {
    TrainRecipe r = file.empty() ? base : recipe_from_file(file, base);
    if (epochs) r.epochs = *epochs;
    if (batch_size) r.batch_size = *batch_size;
    if (lr) r.base_lr = *lr;
    if (snr_db) r.snr_db = *snr_db;
    if (seed) r.seed = *seed;
    if (deterministic) r.deterministic = *deterministic;
    if (keep_best) r.keep_best = *keep_best;
    r.validate();
    return r;
  }
};

std::string registry_hash(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a("");
  for (const auto& f : files) {
    h = fnv1a(f.filename().string(), h);
    h = fnv1a(read_file(f), h);
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void print_counts_row(const char* name, const ClassCounts& c) {
  std::printf("%-12s %8zu %8zu %8zu %9.2f%%\n", name, c.n_pos, c.n_neg, c.total(),
              c.total() ? 100.0 * static_cast<double>(c.n_pos) / static_cast<double>(c.total())
                        : 0.0);
}

void print_manifest_counts(const DatasetManifest& m) {
  std::printf("%-12s %8s %8s %8s %10s\n", "split", "pos", "neg", "total", "pos rate");
  if (m.is_split()) {
    print_counts_row("train", m.counts(Split::kTrain));
    print_counts_row("test", m.counts(Split::kTest));
  }
  print_counts_row("all", m.counts());
}

void print_metrics(const Metrics& m) {
  std::printf("threshold  %.3f\n", m.threshold);
  std::printf("tp %zu  fp %zu  fn %zu  tn %zu\n", m.tp, m.fp, m.fn, m.tn);
  std::printf("precision  %.4f\nrecall     %.4f\nf1         %.4f\n", m.precision, m.recall, m.f1);
}

Split parse_split_flag(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw ArgumentError("split must be train or test");
}

SessionRegistry registry_for(const DatasetManifest& m, const std::string& override_dir) {
  return SessionRegistry(override_dir.empty() ? fs::path(m.registry) : fs::path(override_dir));
}

void print_epoch(const EpochRecord& e) {
  if (e.has_test) {
    std::printf("epoch %2d  lr %.3g  loss %.5f  test P %.3f R %.3f F1 %.3f  (%.1fs)\n", e.epoch + 1,
                e.lr, e.train_loss, e.test.precision, e.test.recall, e.test.f1, e.seconds);
  } else {
    std::printf("epoch %2d  lr %.3g  loss %.5f  (%.1fs)\n", e.epoch + 1, e.lr, e.train_loss,
                e.seconds);
  }
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"manatee: synthetic data, training, evaluation and review for manatee call detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "manatee 1.0.0");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic session registry");
  std::string synth_config, synth_out;
  std::uint64_t synth_seed = 0;
  std::size_t synth_sessions_n = 20;
  std::string synth_preset = "benchmark";
  std::optional<double> synth_withhold, synth_length;
  synth->add_option("--config", synth_config, "SynthConfig JSON file")->check(CLI::ExistingFile);
  synth->add_option("--preset", synth_preset, "base settings: benchmark (60 s) or long (600 s)")
      ->check(CLI::IsMember({"benchmark", "long"}));
  synth->add_option("--out", synth_out, "output registry directory")->required();
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--sessions", synth_sessions_n, "number of sessions");
  synth->add_option("--withhold", synth_withhold, "fraction of calls left unannotated");
  synth->add_option("--length", synth_length, "session length in seconds");

  // build
  auto* build = app.add_subcommand("build", "window and label a registry into a manifest");
  std::string build_registry, build_out, build_rule = "call";
  double build_train_frac = 0.7;
  std::uint64_t build_seed = 0;
  build->add_option("--registry", build_registry, "session registry directory")->required();
  build->add_option("--out", build_out, "manifest output path")->required();
  build->add_option("--train-frac", build_train_frac, "train fraction")->check(CLI::Range(0.0, 1.0));
  build->add_option("--seed", build_seed, "split seed");
  build->add_option("--rule", build_rule, "labelling rule: call (>=50% of call) or window")
      ->check(CLI::IsMember({"call", "window"}));

  // train
  auto* trn = app.add_subcommand("train", "train a model on a manifest");
  std::string train_manifest, train_out, train_history, train_registry;
  RecipeFlags train_flags;
  trn->add_option("--manifest", train_manifest, "manifest path")->required()->check(CLI::ExistingFile);
  trn->add_option("--out", train_out, "checkpoint output path")->required();
  trn->add_option("--history", train_history, "history output (one JSON record per epoch)");
  trn->add_option("--registry", train_registry, "override the manifest's registry directory");
  train_flags.attach(trn);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a manifest split");
  std::string eval_ckpt, eval_manifest, eval_split = "test", eval_pr, eval_registry;
  double eval_threshold = 0.5;
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
  ev->add_option("--manifest", eval_manifest, "manifest path")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", eval_split, "train or test")->check(CLI::IsMember({"train", "test"}));
  ev->add_option("--threshold", eval_threshold, "decision threshold")->check(CLI::Range(0.0, 1.0));
  ev->add_option("--pr-out", eval_pr, "write the precision-recall curve as CSV");
  ev->add_option("--registry", eval_registry, "override the manifest's registry directory");

  // mine
  auto* mine = app.add_subcommand("mine", "queue likely missed calls for review");
  std::string mine_ckpt, mine_manifest, mine_store, mine_registry;
  double mine_threshold = 0.5;
  std::optional<std::size_t> mine_limit;
  bool mine_include_decided = false;
  mine->add_option("--checkpoint", mine_ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
  mine->add_option("--manifest", mine_manifest, "manifest path")->required()->check(CLI::ExistingFile);
  mine->add_option("--store", mine_store, "review log (created if missing)")->required();
  mine->add_option("--threshold", mine_threshold, "minimum score")->check(CLI::Range(0.0, 1.0));
  mine->add_option("--limit", mine_limit, "keep at most this many candidates");
  mine->add_flag("--include-decided", mine_include_decided,
                 "do not filter candidates that were already decided");
  mine->add_option("--registry", mine_registry, "override the manifest's registry directory");

  // serve
  auto* serve = app.add_subcommand("serve", "run the review HTTP API");
  ServerConfig serve_cfg;
  std::string serve_manifest, serve_ckpt, serve_registry, serve_store;
  serve->add_option("--host", serve_cfg.host, "bind address (env MANATEE_HOST)");
  serve->add_option("--port", serve_cfg.port, "port (env MANATEE_PORT)");
  serve->add_option("--manifest", serve_manifest, "manifest path (env MANATEE_MANIFEST)");
  serve->add_option("--checkpoint", serve_ckpt, "checkpoint path (env MANATEE_CHECKPOINT)");
  serve->add_option("--registry", serve_registry, "registry directory (env MANATEE_REGISTRY)");
  serve->add_option("--store", serve_store, "review log (env MANATEE_STORE)");

  // apply
  auto* apply = app.add_subcommand("apply", "merge review decisions into a new manifest");
  std::string apply_manifest, apply_store, apply_out;
  apply->add_option("--manifest", apply_manifest, "manifest path")->required()->check(CLI::ExistingFile);
  apply->add_option("--store", apply_store, "review log")->required()->check(CLI::ExistingFile);
  apply->add_option("--out", apply_out, "revised manifest path")->required();

  // experiment feedback
  auto* experiment = app.add_subcommand("experiment", "end-to-end experiments");
  experiment->require_subcommand(1);
  auto* fb = experiment->add_subcommand("feedback", "withhold calls, mine, confirm, retrain");
  std::string fb_work, fb_json, fb_config;
  std::size_t fb_seeds = 3, fb_sessions = 20;
  std::uint64_t fb_seed = 0;
  double fb_withhold = 0.5, fb_threshold = 0.5, fb_train_frac = 0.7;
  RecipeFlags fb_flags;
  fb->add_option("--work-dir", fb_work, "scratch directory for registries")->required();
  fb->add_option("--config", fb_config, "SynthConfig JSON file")->check(CLI::ExistingFile);
  fb->add_option("--runs", fb_seeds, "number of seeds")->check(CLI::PositiveNumber);
  fb->add_option("--first-seed", fb_seed, "first data seed");
  fb->add_option("--sessions", fb_sessions, "sessions per run");
  fb->add_option("--withhold", fb_withhold, "fraction of calls withheld")->check(CLI::Range(0.0, 1.0));
  fb->add_option("--threshold", fb_threshold, "mining threshold")->check(CLI::Range(0.0, 1.0));
  fb->add_option("--train-frac", fb_train_frac, "train fraction")->check(CLI::Range(0.0, 1.0));
  fb->add_option("--json", fb_json, "write the per-seed report as JSON");
  fb_flags.attach(fb);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      SynthConfig base = synth_preset == "long" ? SynthConfig{} : SynthConfig::benchmark();
      SynthConfig cfg = synth_config.empty() ? base
                                             : synth_config_from_json(read_file(synth_config), base);
      if (synth_withhold) cfg.withhold_fraction = *synth_withhold;
      if (synth_length) cfg.session_length_s = *synth_length;
      cfg.validate();
      if (synth_sessions_n == 0) throw ArgumentError("--sessions must be at least 1");
      const auto sessions = synth_sessions(cfg, synth_seed, synth_sessions_n);
      write_registry(synth_out, sessions);
      atomic_write_file(fs::path(synth_out) / "synth_config.json", synth_config_to_json(cfg));
      std::size_t visible = 0, hidden = 0, bursts = 0;
      for (const auto& s : sessions) {
        visible += s.session.annotations.size();
        hidden += s.hidden.size();
        bursts += s.distractors.size();
      }
      std::printf("sessions     %zu x %.1f s\n", sessions.size(), cfg.session_length_s);
      std::printf("calls        %zu annotated, %zu withheld\n", visible, hidden);
      std::printf("distractors  %zu\n", bursts);
      std::printf("registry     %s (hash %s)\n", synth_out.c_str(), registry_hash(synth_out).c_str());
    } else if (*build) {
      SessionRegistry registry(build_registry);
      const LabelRule rule = build_rule == "call" ? call_coverage_rule() : window_coverage_rule();
      const auto manifest = split_train_test(build_manifest(registry, rule), build_train_frac,
                                             build_seed, registry);
      save_manifest(build_out, manifest);
      std::printf("sessions %zu, windows %zu\n", registry.session_ids().size(),
                  manifest.samples.size());
      print_manifest_counts(manifest);
      std::printf("norm mean %.6f std %.6f\n", manifest.norm_stats->mean, manifest.norm_stats->std);
      for (const auto& w : manifest.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    } else if (*trn) {
      std::vector<std::string> warnings;
      const auto manifest = load_manifest(train_manifest, &warnings);
      for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      const auto registry = registry_for(manifest, train_registry);
      const TrainRecipe recipe = train_flags.resolve();
      const auto config = model_by_name(train_flags.model);
      std::printf("model %s: %zu parameters; train %zu windows\n", train_flags.model.c_str(),
                  parameter_count(config), manifest.counts(Split::kTrain).total());
      const auto result = train(manifest, registry, config, recipe, print_epoch);
      std::printf("initial loss %.5f\n", result.history.initial_loss);
      save_checkpoint(train_out, result.checkpoint);
      if (!train_history.empty()) atomic_write_file(train_history, history_to_text(result.history));
    } else if (*ev) {
      const auto manifest = load_manifest(eval_manifest);
      const auto registry = registry_for(manifest, eval_registry);
      const auto ckpt = load_checkpoint(eval_ckpt);
      const auto scores = score_split(ckpt, manifest, registry, parse_split_flag(eval_split));
      print_metrics(compute_metrics(scores.scores, scores.labels, eval_threshold));
      if (std::count(scores.labels.begin(), scores.labels.end(), 1) > 0) {
        const auto curve = pr_curve(scores.scores, scores.labels);
        std::printf("average precision %.4f\n", curve.average_precision);
        if (!eval_pr.empty()) atomic_write_file(eval_pr, pr_curve_csv(curve));
      } else if (!eval_pr.empty()) {
        throw ArgumentError("no positive samples in the split; cannot write a PR curve");
      }
    } else if (*mine) {
      const auto manifest = load_manifest(mine_manifest);
      const auto registry = registry_for(manifest, mine_registry);
      const auto ckpt = load_checkpoint(mine_ckpt);
      ReviewStore store{fs::path(mine_store)};
      const auto found = mine_candidates(ckpt, manifest, registry, mine_threshold, mine_limit,
                                         mine_include_decided ? nullptr : &store);
      const std::size_t added = store.add_candidates(found);
      if (!fs::exists(mine_store)) atomic_write_file(mine_store, "");
      const auto counts = store.counts();
      std::printf("candidates %zu (new %zu); store: %zu pending, %zu confirmed, %zu rejected\n",
                  found.size(), added, counts.pending, counts.confirmed, counts.rejected);
      for (std::size_t i = 0; i < found.size() && i < 10; ++i) {
        std::printf("  %-28s %.4f\n", found[i].id.c_str(), found[i].score);
      }
    } else if (*serve) {
      serve_cfg.manifest = serve_manifest;
      serve_cfg.checkpoint = serve_ckpt;
      serve_cfg.registry = serve_registry;
      serve_cfg.store = serve_store;
      serve_cfg.apply_environment();
      ReviewServer server(serve_cfg);
      const int port = server.bind(serve_cfg.host, serve_cfg.port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::printf("listening on http://%s:%d\n", serve_cfg.host.c_str(), port);
      std::fflush(stdout);
      server.run();
      g_server = nullptr;
    } else if (*apply) {
      const auto manifest = load_manifest(apply_manifest);
      ReviewStore store{fs::path(apply_store)};
      const auto revised = apply_decisions(manifest, store);
      save_manifest(apply_out, revised);
      std::printf("%-10s %8s %8s %8s %8s\n", "dataset", "train+", "train-", "all+", "all-");
      auto row = [](const char* name, const DatasetManifest& m) {
        std::printf("%-10s %8zu %8zu %8zu %8zu\n", name, m.counts(Split::kTrain).n_pos,
                    m.counts(Split::kTrain).n_neg, m.counts().n_pos, m.counts().n_neg);
      };
      row("before", manifest);
      row("after", revised);
      std::printf("revision %d -> %d\n", manifest.revision, revised.revision);
    } else if (*experiment) {
      FeedbackExperimentConfig cfg;
      if (!fb_config.empty()) cfg.synth = synth_config_from_json(read_file(fb_config), cfg.synth);
      cfg.synth.withhold_fraction = fb_withhold;
      cfg.sessions = fb_sessions;
      cfg.recipe = fb_flags.resolve(cfg.recipe);
      cfg.model = model_by_name(fb_flags.model);
      cfg.mine_threshold = fb_threshold;
      cfg.train_fraction = fb_train_frac;
      std::vector<FeedbackReport> reports;
      for (std::size_t r = 0; r < fb_seeds; ++r) {
        cfg.seed = fb_seed + r;
        cfg.work_dir = fs::path(fb_work) / ("seed_" + std::to_string(cfg.seed));
        fs::create_directories(cfg.work_dir);
        std::printf("run %zu/%zu (seed %llu)\n", r + 1, fb_seeds,
                    static_cast<unsigned long long>(cfg.seed));
        std::fflush(stdout);
        reports.push_back(feedback_experiment(cfg));
        std::printf("%s", feedback_report_text(std::span(&reports.back(), 1)).c_str());
      }
      std::printf("\n%s", feedback_report_text(reports).c_str());
      if (!fb_json.empty()) atomic_write_file(fb_json, feedback_report_json(reports));
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
