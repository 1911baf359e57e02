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

#include "manatee/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "manatee/errors.hpp"
#include "manatee/util.hpp"

namespace manatee {
namespace {

using nlohmann::json;

constexpr const char* kManifestFormat = "manatee-manifest";

Label parse_label(const std::string& s) {
  if (s == "positive") return Label::kPositive;
  if (s == "negative") return Label::kNegative;
  throw FormatError("manifest: unknown label '" + s + "'");
}

Origin parse_origin(const std::string& s) {
  if (s == "expert") return Origin::kExpert;
  if (s == "feedback") return Origin::kFeedback;
  throw FormatError("manifest: unknown origin '" + s + "'");
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  if (s == "unassigned") return Split::kUnassigned;
  throw FormatError("manifest: unknown split '" + s + "'");
}

json counts_json(const ClassCounts& c) { return {{"n_pos", c.n_pos}, {"n_neg", c.n_neg}}; }

}  // namespace

const char* to_string(Label label) {
  return label == Label::kPositive ? "positive" : "negative";
}

const char* to_string(Origin origin) {
  return origin == Origin::kFeedback ? "feedback" : "expert";
}

const char* to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kTest:
      return "test";
    case Split::kUnassigned:
      break;
  }
  return "unassigned";
}

ClassCounts DatasetManifest::counts(Split split) const {
  ClassCounts c;
  for (const auto& s : samples) {
    if (s.split != split) continue;
    (s.label == Label::kPositive ? c.n_pos : c.n_neg) += 1;
  }
  return c;
}

ClassCounts DatasetManifest::counts() const {
  ClassCounts c;
  for (const auto& s : samples) (s.label == Label::kPositive ? c.n_pos : c.n_neg) += 1;
  return c;
}

bool DatasetManifest::is_split() const {
  return !samples.empty() && std::none_of(samples.begin(), samples.end(), [](const auto& s) {
    return s.split == Split::kUnassigned;
  });
}

std::optional<std::size_t> DatasetManifest::find(const std::string& session_id,
                                                 double window_start_s) const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].session_id == session_id &&
        std::abs(samples[i].window_start_s - window_start_s) < 1e-6) {
      return i;
    }
  }
  return std::nullopt;
}

std::vector<double> window_starts(double duration_s) {
  std::vector<double> starts;
  for (std::size_t k = 0;; ++k) {
    const double start = static_cast<double>(k) * kWindowHopSeconds;
    if (!(start < duration_s)) break;
    if (k > 0 && start - kWindowHopSeconds + kWindowSeconds >= duration_s) break;
    starts.push_back(start);
  }
  return starts;
}

double overlap_seconds(const Annotation& a, double start_s, double end_s) {
  return std::max(0.0, std::min(a.end_s, end_s) - std::max(a.start_s, start_s));
}

LabelRule call_coverage_rule(double fraction) {
  return [fraction](std::span<const Annotation> annotations, double start_s, double end_s) {
    for (const auto& a : annotations) {
      if (a.start_s >= end_s) break;  // sorted by start
      if (overlap_seconds(a, start_s, end_s) / a.duration_s() >= fraction) return true;
    }
    return false;
  };
}

LabelRule window_coverage_rule(double fraction) {
  return [fraction](std::span<const Annotation> annotations, double start_s, double end_s) {
    // union length of the calls clipped to the window
    double covered = 0.0, cursor = start_s;
    for (const auto& a : annotations) {
      const double lo = std::max(a.start_s, cursor);
      const double hi = std::min(a.end_s, end_s);
      if (hi > lo) {
        covered += hi - lo;
        cursor = hi;
      }
    }
    return covered / (end_s - start_s) >= fraction;
  };
}

std::vector<LabeledSample> window_and_label(const RecordingSession& session,
                                            const LabelRule& rule) {
  std::vector<LabeledSample> out;
  for (double start : window_starts(session.duration_s())) {
    LabeledSample s;
    s.session_id = session.id;
    s.window_start_s = start;
    s.label = rule(session.annotations, start, start + kWindowSeconds) ? Label::kPositive
                                                                       : Label::kNegative;
    out.push_back(std::move(s));
  }
  return out;
}

SessionRegistry::SessionRegistry(std::filesystem::path root) : root_(std::move(root)) {
  if (!std::filesystem::is_directory(root_)) {
    throw IoError("session registry " + root_.string() + " is not a directory");
  }
}

std::vector<std::string> SessionRegistry::session_ids() const {
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(root_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") {
      ids.push_back(entry.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

bool SessionRegistry::has_audio(const std::string& id) const {
  return std::filesystem::is_regular_file(root_ / (id + ".wav"));
}

const RecordingSession& SessionRegistry::session(const std::string& id) const {
  std::lock_guard lock(mutex_);
  if (auto it = cache_.find(id); it != cache_.end()) return *it->second;
  const auto wav = root_ / (id + ".wav");
  const auto csv = root_ / (id + ".csv");
  if (!std::filesystem::is_regular_file(wav)) {
    throw IoError("session " + id + ": missing audio " + wav.string());
  }
  if (!std::filesystem::is_regular_file(csv)) {
    throw IoError("session " + id + ": missing annotations " + csv.string());
  }
  auto s = std::make_unique<RecordingSession>();
  s->id = id;
  s->clip = load_wav(wav);
  s->annotations = load_annotations(csv);
  validate_session(*s);
  auto& ref = *s;
  cache_.emplace(id, std::move(s));
  return ref;
}

std::vector<Annotation> SessionRegistry::hidden_annotations(const std::string& id) const {
  const auto path = root_ / (id + ".hidden.csv");
  if (!std::filesystem::is_regular_file(path)) return {};
  return load_annotations(path);
}

void SessionRegistry::preload(const DatasetManifest& manifest) const {
  std::string last;
  for (const auto& s : manifest.samples) {
    if (s.session_id != last) {
      session(s.session_id);
      last = s.session_id;
    }
  }
}

AudioClip SessionRegistry::window(const LabeledSample& sample) const {
  return cut_clip(session(sample.session_id), sample.window_start_s, kWindowSeconds);
}

FilterbankFeature SessionRegistry::feature(const LabeledSample& sample) const {
  return log_mel(window(sample));
}

FilterbankFeature SessionRegistry::feature(const LabeledSample& sample,
                                           const NormStats& stats) const {
  return normalize(feature(sample), stats);
}

DatasetManifest build_manifest(const SessionRegistry& registry, const LabelRule& rule) {
  DatasetManifest m;
  m.registry = std::filesystem::absolute(registry.root()).lexically_normal().string();
  for (const auto& id : registry.session_ids()) {
    auto samples = window_and_label(registry.session(id), rule);
    m.samples.insert(m.samples.end(), std::make_move_iterator(samples.begin()),
                     std::make_move_iterator(samples.end()));
  }
  return m;
}

NormStats train_norm_stats(const DatasetManifest& manifest, const SessionRegistry& registry) {
  std::vector<const LabeledSample*> train;
  for (const auto& s : manifest.samples) {
    if (s.split == Split::kTrain) train.push_back(&s);
  }
  if (train.empty()) throw ArgumentError("normalization statistics need a non-empty train split");
  registry.preload(manifest);
  std::vector<FeatureMoments> moments(train.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(train.size()); ++i) {
    moments[static_cast<std::size_t>(i)] =
        feature_moments(registry.feature(*train[static_cast<std::size_t>(i)]));
  }
  return combine_moments(moments);
}

DatasetManifest assign_split(const DatasetManifest& manifest, double train_fraction,
                             std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw ArgumentError("train fraction must lie in [0, 1]");
  }
  DatasetManifest out = manifest;
  const std::size_t n = out.samples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, 0x73706c6974 /* "split" */));
  // Fisher-Yates with an explicit bounded draw so the order does not depend
  // on the standard library's shuffle.
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  for (std::size_t r = 0; r < n; ++r) {
    out.samples[order[r]].split = r < n_train ? Split::kTrain : Split::kTest;
  }
  out.seed = seed;
  out.train_fraction = train_fraction;
  out.warnings.erase(std::remove_if(out.warnings.begin(), out.warnings.end(),
                                    [](const std::string& w) {
                                      return w.rfind("train split has no positive", 0) == 0;
                                    }),
                     out.warnings.end());
  if (out.counts(Split::kTrain).n_pos == 0) {
    out.warnings.push_back("train split has no positive samples");
  }
  return out;
}

DatasetManifest split_train_test(const DatasetManifest& manifest, double train_fraction,
                                 std::uint64_t seed, const SessionRegistry& registry) {
  if (manifest.samples.empty()) throw ArgumentError("split_train_test: empty manifest");
  DatasetManifest out = assign_split(manifest, train_fraction, seed);
  out.norm_stats = train_norm_stats(out, registry);
  return out;
}

AudioClip inject_noise(const AudioClip& clip, double snr_db, std::mt19937_64& rng) {
  double power = 0.0;
  for (float s : clip.samples) power += static_cast<double>(s) * s;
  if (clip.samples.empty() || power == 0.0) return clip;
  power /= static_cast<double>(clip.samples.size());
  const double noise_std = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  std::normal_distribution<double> normal(0.0, noise_std);
  AudioClip out = clip;
  for (auto& s : out.samples) s = static_cast<float>(s + normal(rng));
  return out;
}

ClassWeights class_weights(ClassCounts train) {
  if (train.n_pos == 0 || train.n_neg == 0) {
    throw DegenerateDataError("class weights need both classes in the train split (n_pos=" +
                              std::to_string(train.n_pos) +
                              ", n_neg=" + std::to_string(train.n_neg) + ")");
  }
  return ClassWeights{1.0, 20.0 * static_cast<double>(train.n_pos) /
                               static_cast<double>(train.n_neg)};
}

ClassWeights class_weights(const DatasetManifest& manifest) {
  return class_weights(manifest.counts(Split::kTrain));
}

std::string manifest_to_text(const DatasetManifest& m) {
  json samples = json::array();
  for (const auto& s : m.samples) {
    samples.push_back({{"session_id", s.session_id},
                       {"window_start_s", s.window_start_s},
                       {"label", to_string(s.label)},
                       {"origin", to_string(s.origin)},
                       {"split", to_string(s.split)}});
  }
  json doc = {
      {"format", kManifestFormat},
      {"version", kManifestVersion},
      {"seed", m.seed},
      {"train_fraction", m.train_fraction},
      {"registry", m.registry},
      {"revision", m.revision},
      {"feedback_fingerprint", m.feedback_fingerprint},
      {"norm_stats", m.norm_stats ? json{{"mean", m.norm_stats->mean}, {"std", m.norm_stats->std}}
                                  : json(nullptr)},
      {"counts",
       {{"train", counts_json(m.counts(Split::kTrain))},
        {"test", counts_json(m.counts(Split::kTest))},
        {"unassigned", counts_json(m.counts(Split::kUnassigned))}}},
      {"warnings", m.warnings},
      {"samples", std::move(samples)},
  };
  return doc.dump(1) + "\n";
}

DatasetManifest manifest_from_text(const std::string& text, std::vector<std::string>* warnings) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != kManifestFormat) {
    throw FormatError("not a manatee manifest (missing format tag)");
  }
  if (!doc.contains("version") || !doc["version"].is_number_integer()) {
    throw FormatError("manifest: missing version");
  }
  const int version = doc["version"].get<int>();
  if (version != kManifestVersion) {
    throw FormatError("manifest version " + std::to_string(version) + " is not supported (this build reads version " +
                      std::to_string(kManifestVersion) + ")");
  }
  static const char* known[] = {"format",  "version",    "seed",   "train_fraction",
                                "registry", "revision",  "norm_stats", "counts", "feedback_fingerprint",
                                "warnings", "samples"};
  for (const auto& [key, value] : doc.items()) {
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return key == k; }) == std::end(known)) {
      if (warnings) warnings->push_back("manifest: ignoring unknown field '" + key + "'");
    }
  }
  if (!doc.contains("norm_stats")) throw FormatError("manifest: missing norm_stats");

  DatasetManifest m;
  try {
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.train_fraction = doc.at("train_fraction").get<double>();
    m.registry = doc.at("registry").get<std::string>();
    m.revision = doc.value("revision", 0);
    m.feedback_fingerprint = doc.value("feedback_fingerprint", std::string());
    if (!doc["norm_stats"].is_null()) {
      NormStats st{doc["norm_stats"].at("mean").get<double>(),
                   doc["norm_stats"].at("std").get<double>()};
      if (!(st.std > 0.0)) throw FormatError("manifest: norm_stats std must be positive");
      m.norm_stats = st;
    }
    m.warnings = doc.value("warnings", std::vector<std::string>{});
    for (const auto& row : doc.at("samples")) {
      LabeledSample s;
      s.session_id = row.at("session_id").get<std::string>();
      s.window_start_s = row.at("window_start_s").get<double>();
      s.label = parse_label(row.at("label").get<std::string>());
      s.origin = parse_origin(row.value("origin", std::string("expert")));
      s.split = parse_split(row.value("split", std::string("unassigned")));
      const double k = s.window_start_s / kWindowHopSeconds;
      if (s.window_start_s < 0.0 || k != std::floor(k)) {
        throw FormatError("manifest: window_start_s " + std::to_string(s.window_start_s) +
                          " is not a non-negative multiple of 0.5 s");
      }
      m.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  if (doc.contains("counts")) {
    const auto& c = doc["counts"];
    auto check = [&](const char* name, Split split) {
      if (!c.contains(name)) return;
      ClassCounts stored{c[name].at("n_pos").get<std::size_t>(),
                         c[name].at("n_neg").get<std::size_t>()};
      if (!(stored == m.counts(split))) {
        throw FormatError(std::string("manifest: stored ") + name +
                          " counts disagree with the sample rows");
      }
    };
    check("train", Split::kTrain);
    check("test", Split::kTest);
  }
  return m;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  atomic_write_file(path, manifest_to_text(manifest));
}

DatasetManifest load_manifest(const std::filesystem::path& path,
                              std::vector<std::string>* warnings) {
  try {
    return manifest_from_text(read_file(path), warnings);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string candidate_id(const std::string& session_id, double window_start_s) {
  return session_id + "@" + std::to_string(std::llround(window_start_s * 1000.0));
}

}  // namespace manatee
