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

// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,4,7] [--work-dir DIR] [--cli PATH]

#include <httplib.h>

#include <CLI11.hpp>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "manatee/dataset.hpp"
#include "manatee/dsp.hpp"
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

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Context {
  fs::path work;
  fs::path cli;
};

// 1 --------------------------------------------------------------------------

Outcome gradient_check(const Context&) {
  const auto t0 = Clock::now();
  Model<double> m(ModelConfig::tiny());
  m.initialize(2024);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (auto& p : m.parameters()) p += jitter(rng);
  FilterbankFeature f;
  std::normal_distribution<double> unit(0.0, 1.0);
  for (auto& v : f.values) v = unit(rng);
  f.normalized = true;
  const ClassWeights w{1.0, 0.8};
  const int label = 1;

  Workspace<double> ws(m.config());
  std::vector<double> grad(m.parameters().size(), 0.0);
  loss_and_gradient<double>(m, f, label, w, ws, std::span<double>(grad));

  const double h = 1e-4;
  double worst = 0.0;
  std::size_t worst_at = 0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double keep = m.parameters()[i];
    m.parameters()[i] = keep + h;
    const double up = weighted_bce(m.score(f), label, w);
    m.parameters()[i] = keep - h;
    const double down = weighted_bce(m.score(f), label, w);
    m.parameters()[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double err =
        std::abs(numeric - grad[i]) / std::max({std::abs(numeric), std::abs(grad[i]), 1e-8});
    if (err > worst) {
      worst = err;
      worst_at = i;
    }
  }
  const double t = seconds_since(t0);
  return {worst < 1e-4 && t < 120.0,
          fmt("%zu parameters, max relative error %.2e (parameter %zu), %.1f s", grad.size(), worst,
              worst_at, t)};
}

// 2 --------------------------------------------------------------------------

std::size_t enumerate_patches(std::size_t H, std::size_t W, std::size_t ph, std::size_t pw,
                              std::size_t sh, std::size_t sw) {
  std::size_t rows = 0, cols = 0;
  for (std::size_t r = 0; r + ph <= H; r += sh) ++rows;
  for (std::size_t c = 0; c + pw <= W; c += sw) ++cols;
  return rows * cols;
}

Outcome shape_law(const Context&) {
  const std::size_t canonical = patch_count(64, 128, 16, 16, 10, 10);
  bool ok = canonical == 60 && ModelConfig{}.num_patches() == 60 && ModelConfig{}.tokens() == 61;
  std::mt19937_64 rng(3);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  int mismatches = 0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t H = pick(8, 200), W = pick(8, 300);
    const std::size_t ph = pick(1, H), pw = pick(1, W);
    const std::size_t sh = pick(1, 24), sw = pick(1, 24);
    if (patch_count(H, W, ph, pw, sh, sw) != enumerate_patches(H, W, ph, pw, sh, sw)) ++mismatches;
  }
  ok = ok && mismatches == 0;
  return {ok, fmt("N = %zu for 64x128 / 16x16 / stride 10; %d of 50 random geometries disagree "
                  "with enumeration",
                  canonical, mismatches)};
}

// 3 --------------------------------------------------------------------------

// Annotations on a 1 ms grid; a window is positive iff at least half of some
// call's milliseconds lie inside it. Counts ticks one by one.
bool oracle_positive(const std::vector<std::pair<int, int>>& calls, int w0) {
  for (const auto& [a, b] : calls) {
    int inside = 0;
    for (int t = a; t < b; ++t) inside += t >= w0 && t < w0 + 1000;
    if (2 * inside >= b - a) return true;
  }
  return false;
}

Outcome labelling_oracle(const Context&) {
  std::mt19937_64 rng(11);
  std::size_t windows = 0, disagreements = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int duration_ms = std::uniform_int_distribution<int>(1000, 30000)(rng);
    const int n_calls = std::uniform_int_distribution<int>(0, 10)(rng);
    std::vector<std::pair<int, int>> calls;
    RecordingSession s;
    s.id = "oracle";
    s.clip.samples.assign(static_cast<std::size_t>(duration_ms) * 48, 0.0f);
    for (int c = 0; c < n_calls; ++c) {
      const int len = std::uniform_int_distribution<int>(20, 2500)(rng);
      const int start = std::uniform_int_distribution<int>(0, duration_ms - 1)(rng);
      calls.emplace_back(start, start + len);
    }
    std::sort(calls.begin(), calls.end());
    for (const auto& [a, b] : calls) s.annotations.push_back({a / 1000.0, b / 1000.0});
    // expected window grid: starts every 500 ms while the previous window ends before the session
    std::vector<int> starts;
    for (int w = 0; w < duration_ms; w += 500) {
      if (!starts.empty() && starts.back() + 1000 >= duration_ms) break;
      starts.push_back(w);
    }
    const auto got = window_and_label(s);
    if (got.size() != starts.size()) {
      ++disagreements;
      continue;
    }
    for (std::size_t k = 0; k < got.size(); ++k) {
      ++windows;
      const int w0 = static_cast<int>(std::lround(got[k].window_start_s * 1000.0));
      if (w0 != starts[k] || (got[k].label == Label::kPositive) != oracle_positive(calls, w0)) {
        ++disagreements;
      }
    }
  }
  return {disagreements == 0,
          fmt("1000 annotation sets, %zu windows, %zu disagreements", windows, disagreements)};
}

// 4 --------------------------------------------------------------------------

Outcome filterbank(const Context&) {
  const double m700 = mel_scale(700.0);
  const auto& bank = default_filterbank();
  double below = 0.0;
  for (std::size_t k = 0; k < bank.n_fft_bins; ++k) {
    if (fft_bin_hz(k) >= 2000.0) continue;
    for (std::size_t m = 0; m < bank.n_mels; ++m) below = std::max(below, std::abs(bank.weights(m, k)));
  }
  double unity = 0.0;
  std::size_t interior = 0;
  for (std::size_t k = 0; k < bank.n_fft_bins; ++k) {
    const double f = fft_bin_hz(k);
    if (f < bank.centers_hz.front() || f > bank.centers_hz.back()) continue;
    double sum = 0.0;
    for (std::size_t m = 0; m < bank.n_mels; ++m) sum += bank.weights(m, k);
    unity = std::max(unity, std::abs(sum - 1.0));
    ++interior;
  }
  // shapes for silence, a tone, noise and a window cut past the end of a session
  RecordingSession s;
  s.clip.samples.assign(30000, 0.25f);
  std::vector<AudioClip> clips = {AudioClip{std::vector<float>(kClipSamples, 0.0f)},
                                  cut_clip(s, 0.2, 1.0)};
  std::mt19937_64 rng(5);
  std::normal_distribution<double> d(0.0, 0.1);
  AudioClip noise{std::vector<float>(kClipSamples)};
  for (auto& x : noise.samples) x = static_cast<float>(d(rng));
  clips.push_back(noise);
  AudioClip tone{std::vector<float>(kClipSamples)};
  for (std::size_t i = 0; i < kClipSamples; ++i) {
    tone.samples[i] = static_cast<float>(0.5 * std::sin(2.0 * M_PI * 3000.0 * i / kSampleRateHz));
  }
  clips.push_back(tone);
  bool shapes = true;
  for (const auto& c : clips) {
    const auto f = log_mel(c);
    shapes = shapes && f.values.size() == kMelBins * kFrames;
  }
  const bool ok = std::abs(m700 - 781.17) <= 0.01 && below == 0.0 && unity <= 1e-6 &&
                  interior > 0 && shapes && kMelBins == 64 && kFrames == 128;
  return {ok, fmt("mel(700) = %.4f, max weight below 2 kHz %.1e, partition-of-unity error %.1e "
                  "over %zu interior bins, shapes %s",
                  m700, below, unity, interior, shapes ? "64x128" : "WRONG")};
}

// 5 --------------------------------------------------------------------------

Outcome noise_snr(const Context&) {
  std::mt19937_64 rng(99);
  double lo = 1e9, hi = -1e9;
  const int clips = 200;
  for (int c = 0; c < clips; ++c) {
    AudioClip clip{std::vector<float>(kClipSamples)};
    const double f = 2000.0 + 100.0 * c;
    const double a = 0.05 + 0.004 * c;
    for (std::size_t i = 0; i < kClipSamples; ++i) {
      clip.samples[i] = static_cast<float>(a * std::sin(2.0 * M_PI * f * i / kSampleRateHz));
    }
    const auto noisy = inject_noise(clip, 10.0, rng);
    double ps = 0.0, pn = 0.0;
    for (std::size_t i = 0; i < kClipSamples; ++i) {
      const double s = clip.samples[i];
      const double n = static_cast<double>(noisy.samples[i]) - s;
      ps += s * s;
      pn += n * n;
    }
    const double snr = 10.0 * std::log10(ps / pn);
    lo = std::min(lo, snr);
    hi = std::max(hi, snr);
  }
  return {lo >= 9.7 && hi <= 10.3,
          fmt("%d clips of 48000 samples, empirical SNR in [%.3f, %.3f] dB", clips, lo, hi)};
}

// 6 --------------------------------------------------------------------------

Outcome class_weighting(const Context&) {
  std::mt19937_64 rng(6);
  int bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t pos = std::uniform_int_distribution<std::size_t>(1, 5000)(rng);
    const std::size_t neg = std::uniform_int_distribution<std::size_t>(1, 500000)(rng);
    const auto w = class_weights(ClassCounts{pos, neg});
    if (w.negative != 20.0 * static_cast<double>(pos) / static_cast<double>(neg) ||
        w.positive != 1.0) {
      ++bad;
    }
  }
  const auto reference = class_weights(ClassCounts{682, 10700});
  return {bad == 0, fmt("1000 random count pairs, %d mismatches; 682/10700 gives w_neg = %.6f", bad,
                        reference.negative)};
}

// 7 --------------------------------------------------------------------------

Outcome synthetic_end_to_end(const Context& ctx) {
  const auto t0 = Clock::now();
  const fs::path dir = ctx.work / "c7";
  fs::remove_all(dir);
  const auto sessions = synth_sessions(SynthConfig::benchmark(), 1, 20);
  write_registry(dir / "registry", sessions);
  SessionRegistry registry(dir / "registry");
  const auto manifest = split_train_test(build_manifest(registry), 0.7, 1, registry);
  std::size_t bursts = 0;
  for (const auto& s : sessions) bursts += s.distractors.size();
  TrainRecipe recipe;
  recipe.seed = 1;
  const auto result = train(manifest, registry, ModelConfig::desk(), recipe, [](const EpochRecord& e) {
    std::fprintf(stderr, "  [7] epoch %2d loss %.5f test F1 %.3f\n", e.epoch + 1, e.train_loss,
                 e.test.f1);
  });
  const auto m = evaluate(result.checkpoint, manifest, registry, Split::kTest);
  const double t = seconds_since(t0);
  const auto all = manifest.counts();
  return {m.f1 >= 0.90 && t <= 900.0,
          fmt("%zu sessions, %zu windows, %.1f%% positive, %zu distractors, %d epochs: "
              "P %.3f R %.3f F1 %.3f at 0.5, %.0f s",
              sessions.size(), all.total(), 100.0 * all.n_pos / all.total(), bursts,
              recipe.epochs, m.precision, m.recall, m.f1, t)};
}

// 8 --------------------------------------------------------------------------

Outcome feedback_loop(const Context& ctx) {
  std::vector<FeedbackReport> reports;
  for (std::uint64_t seed : {1, 2, 3}) {
    FeedbackExperimentConfig cfg;
    cfg.synth.withhold_fraction = 0.5;
    cfg.seed = seed;
    cfg.work_dir = ctx.work / ("c8_seed" + std::to_string(seed));
    reports.push_back(feedback_experiment(cfg));
    const auto& r = reports.back();
    std::fprintf(stderr, "  [8] seed %llu: recovered %zu/%zu, F1 %.3f -> %.3f (truth %.3f -> %.3f)\n",
                 static_cast<unsigned long long>(seed), r.recovered_windows, r.hidden_windows,
                 r.before.f1, r.after.f1, r.before_truth.f1, r.after_truth.f1);
  }
  double recovered = 0.0, before = 0.0, after = 0.0, before_truth = 0.0, after_truth = 0.0;
  for (const auto& r : reports) {
    recovered += r.recovered_fraction / reports.size();
    before += r.before.f1 / reports.size();
    after += r.after.f1 / reports.size();
    before_truth += r.before_truth.f1 / reports.size();
    after_truth += r.after_truth.f1 / reports.size();
  }
  const bool ok = recovered >= 0.60 && after_truth > before_truth && after > before;
  return {ok, fmt("3 seeds, withhold 0.5: mean recovered %.3f; mean held-out F1 %.3f -> %.3f "
                  "against ground truth, %.3f -> %.3f against each dataset's own labels",
                  recovered, before_truth, after_truth, before, after)};
}

// 9 --------------------------------------------------------------------------

Outcome pr_ap(const Context&) {
  const std::vector<double> ws = {0.9, 0.8, 0.7};
  const std::vector<int> wl = {1, 0, 1};
  const auto worked = pr_curve(ws, wl);
  bool ok = std::abs(worked.average_precision - 5.0 / 6.0) < 1e-12;

  std::mt19937_64 rng(9);
  int bad = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 80)(rng);
    const int levels = std::uniform_int_distribution<int>(2, 40)(rng);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = std::uniform_int_distribution<int>(0, levels)(rng) / static_cast<double>(levels);
      y[i] = std::bernoulli_distribution(0.3)(rng);
    }
    y[std::uniform_int_distribution<int>(0, n - 1)(rng)] = 1;
    std::set<double, std::greater<>> thresholds(s.begin(), s.end());
    const auto curve = pr_curve(s, y);
    if (curve.points.size() != thresholds.size()) {
      ++bad;
      continue;
    }
    double ap = 0.0, prev_r = 0.0;
    std::size_t k = 0;
    bool same = true;
    for (double t : thresholds) {
      const auto m = compute_metrics(s, y, t);
      const double p = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
      const double r = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
      const auto& pt = curve.points[k++];
      same = same && pt.threshold == t && pt.precision == p && pt.recall == r;
      ap += (r - prev_r) * p;
      prev_r = r;
    }
    if (!same || curve.average_precision != ap) ++bad;
  }
  ok = ok && bad == 0;
  return {ok, fmt("worked example AP = %.4f; %d of 200 random score sets differ from the "
                  "per-threshold oracle",
                  worked.average_precision, bad)};
}

// 10 -------------------------------------------------------------------------

Outcome lr_schedule(const Context&) {
  const double e0 = lr_at_epoch(1e-6, 0), e5 = lr_at_epoch(1e-6, 5), e24 = lr_at_epoch(1e-6, 24);
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-15 * b; };
  return {close(e0, 1e-6) && close(e5, 5e-7) && close(e24, 6.25e-8),
          fmt("epoch 0: %.3g, epoch 5: %.3g, epoch 24: %.4g", e0, e5, e24)};
}

// 11 -------------------------------------------------------------------------

int run(const std::string& cmd, const fs::path& log) {
  const std::string full = cmd + " > '" + log.string() + "' 2>&1";
  return std::system(full.c_str());
}

Outcome determinism(const Context& ctx) {
  if (ctx.cli.empty() || !fs::exists(ctx.cli)) {
    return {false, "command-line binary not found; pass --cli"};
  }
  const fs::path dir = ctx.work / "c11";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = "'" + ctx.cli.string() + "'";
  if (run(cli + " synth --preset benchmark --sessions 4 --seed 5 --out '" + (dir / "registry").string() + "'",
          dir / "synth.log") != 0) {
    return {false, "synth failed, see " + (dir / "synth.log").string()};
  }
  std::string evals[2], checkpoints[2], histories[2];
  for (int r = 0; r < 2; ++r) {
    const fs::path d = dir / ("run" + std::to_string(r));
    fs::create_directories(d);
    const std::string m = (d / "manifest.json").string(), c = (d / "model.ckpt").string();
    const bool ok =
        run(cli + " build --registry '" + (dir / "registry").string() + "' --out '" + m + "' --seed 5",
            d / "build.log") == 0 &&
        run(cli + " train --manifest '" + m + "' --out '" + c + "' --epochs 3 --seed 5 --history '" +
                (d / "history.ndjson").string() + "'",
            d / "train.log") == 0 &&
        run(cli + " eval --manifest '" + m + "' --checkpoint '" + c + "'", d / "eval.log") == 0;
    if (!ok) return {false, "pipeline failed in " + d.string()};
    evals[r] = read_file(d / "eval.log");
    checkpoints[r] = read_file(c);
    // wall-clock seconds are the only field allowed to differ
    std::istringstream in(read_file(d / "history.ndjson"));
    for (std::string line; std::getline(in, line);) {
      auto j = nlohmann::json::parse(line);
      j.erase("seconds");
      histories[r] += j.dump() + "\n";
    }
  }
  const bool manifests = read_file(dir / "run0" / "manifest.json") == read_file(dir / "run1" / "manifest.json");
  const bool ok = manifests && evals[0] == evals[1] && checkpoints[0] == checkpoints[1] &&
                  histories[0] == histories[1];
  return {ok, fmt("two build+train+eval runs, seed 5: manifests %s, checkpoints %s (%zu bytes), "
                  "histories %s, eval output %s",
                  manifests ? "identical" : "DIFFER", checkpoints[0] == checkpoints[1] ? "identical" : "DIFFER",
                  checkpoints[0].size(), histories[0] == histories[1] ? "identical" : "DIFFER",
                  evals[0] == evals[1] ? "identical" : "DIFFER")};
}

// 12 -------------------------------------------------------------------------

struct LiveServer {
  std::unique_ptr<ReviewServer> server;
  std::thread thread;
  int port = 0;

  LiveServer(const DatasetManifest& m, std::shared_ptr<SessionRegistry> reg,
             std::shared_ptr<ReviewStore> store) {
    server = std::make_unique<ReviewServer>(m, *m.norm_stats, std::move(reg), std::move(store));
    port = server->bind("127.0.0.1", 0);
    thread = std::thread([this] { server->run(); });
    server->wait_until_ready();
  }
  ~LiveServer() {
    server->stop();
    thread.join();
  }
};

int post(int port, const std::string& id, const std::string& decision) {
  httplib::Client c("127.0.0.1", port);
  auto res = c.Post("/api/candidates/" + id + "/decision",
                    nlohmann::json{{"decision", decision}}.dump(), "application/json");
  return res ? res->status : -1;
}

Outcome server_durability(const Context& ctx) {
  const fs::path dir = ctx.work / "c12";
  fs::remove_all(dir);
  SynthConfig cfg = SynthConfig::benchmark();
  cfg.session_length_s = 10.0;
  cfg.calls_per_session_range = {1, 2};
  write_registry(dir / "registry", synth_sessions(cfg, 12, 2));
  auto registry = std::make_shared<SessionRegistry>(dir / "registry");
  const auto manifest = split_train_test(build_manifest(*registry), 0.7, 12, *registry);
  std::vector<double> scores;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) scores.push_back(0.99 - 0.001 * i);
  const auto candidates = candidates_from_scores(manifest, scores, 0.0);
  const fs::path log = dir / "decisions.ndjson";

  const int races = 20;
  int wins = 0, conflicts = 0, others = 0;
  std::vector<std::string> decided;
  {
    auto store = std::make_shared<ReviewStore>(log);
    store->add_candidates(candidates);
    LiveServer live(manifest, registry, store);
    for (int k = 0; k < races; ++k) {
      const std::string id = candidates[k].id;
      std::atomic<int> a{0}, b{0};
      std::thread t1([&] { a = post(live.port, id, "confirm"); });
      std::thread t2([&] { b = post(live.port, id, "reject"); });
      t1.join();
      t2.join();
      for (int s : {a.load(), b.load()}) {
        if (s == 200) ++wins;
        else if (s == 409) ++conflicts;
        else ++others;
      }
      decided.push_back(id);
    }
  }
  // restart from the log only
  auto reopened = std::make_shared<ReviewStore>(log);
  LiveServer live(manifest, registry, reopened);
  httplib::Client c("127.0.0.1", live.port);
  auto res = c.Get("/api/candidates?status=all&limit=1000");
  std::size_t survived = 0;
  if (res && res->status == 200) {
    const auto body = nlohmann::json::parse(res->body);
    for (const auto& item : body["items"]) {
      if (item["status"] != "pending" &&
          std::find(decided.begin(), decided.end(), item["id"].get<std::string>()) != decided.end()) {
        ++survived;
      }
    }
  }
  const int after_restart = post(live.port, decided.front(), "confirm");
  const bool ok = wins == races && conflicts == races && others == 0 &&
                  survived == decided.size() && after_restart == 409;
  return {ok, fmt("%d concurrent double POSTs: %d succeeded, %d got 409, %d other; %zu/%zu "
                  "decisions present after restart; re-deciding after restart gives %d",
                  races, wins, conflicts, others, survived, decided.size(), after_restart)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria 1-12"};
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "manatee_acceptance").string();
  std::string cli = MANATEE_CLI_PATH;
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  app.add_option("--work-dir", work, "scratch directory");
  app.add_option("--cli", cli, "path to the manatee binary");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome(const Context&)>>> criteria = {
      {"gradient correctness", gradient_check},
      {"shape law", shape_law},
      {"labelling oracle", labelling_oracle},
      {"filterbank", filterbank},
      {"noise injection", noise_snr},
      {"class weighting", class_weighting},
      {"synthetic end-to-end", synthetic_end_to_end},
      {"feedback loop", feedback_loop},
      {"PR curve and AP", pr_ap},
      {"learning-rate schedule", lr_schedule},
      {"determinism", determinism},
      {"server durability", server_durability},
  };
  Context ctx{work, cli};
  fs::create_directories(ctx.work);
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), n) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
