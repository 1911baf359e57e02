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
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "manatee/audio_io.hpp"
#include "manatee/class_weights.hpp"
#include "manatee/dsp.hpp"

namespace manatee {

inline constexpr double kWindowSeconds = 1.0;
inline constexpr double kWindowHopSeconds = 0.5;

enum class Label : int { kNegative = 0, kPositive = 1 };
enum class Origin { kExpert, kFeedback };
enum class Split { kUnassigned, kTrain, kTest };

struct LabeledSample {
  std::string session_id;
  double window_start_s = 0.0;
  Label label = Label::kNegative;
  Origin origin = Origin::kExpert;
  Split split = Split::kUnassigned;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct ClassCounts {
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::size_t total() const { return n_pos + n_neg; }
  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

inline constexpr int kManifestVersion = 1;

struct DatasetManifest {
  std::vector<LabeledSample> samples;
  std::optional<NormStats> norm_stats;  // train split only
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
  std::string registry;  // session registry directory
  int revision = 0;
  // Fingerprint of the decision set last merged by apply_decisions.
  std::string feedback_fingerprint;
  std::vector<std::string> warnings;

  ClassCounts counts(Split split) const;
  ClassCounts counts() const;  // all samples
  bool is_split() const;
  // Index of the sample at (session_id, window_start_s), if any.
  std::optional<std::size_t> find(const std::string& session_id, double window_start_s) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

// Window starts k * 0.5 s covering the session: a window is emitted while its
// start is inside the session and the previous window did not already reach
// the end. The last window may run past the end and is zero-filled.
std::vector<double> window_starts(double duration_s);

// Decides whether a [start, end) window is positive given sorted annotations.
using LabelRule =
    std::function<bool(std::span<const Annotation> annotations, double start_s, double end_s)>;

// Positive iff some call has at least `fraction` of its own duration inside
// the window (the default rule, fraction 0.5).
LabelRule call_coverage_rule(double fraction = 0.5);

// Positive iff calls cover at least `fraction` of the window.
LabelRule window_coverage_rule(double fraction = 0.5);

double overlap_seconds(const Annotation& a, double start_s, double end_s);

std::vector<LabeledSample> window_and_label(const RecordingSession& session,
                                            const LabelRule& rule = call_coverage_rule());

// Directory of `<id>.wav` + `<id>.csv` pairs, optionally `<id>.hidden.csv`.
// Sessions load lazily and stay cached; access is thread-safe.
class SessionRegistry {
 public:
  explicit SessionRegistry(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::vector<std::string> session_ids() const;
  bool has_audio(const std::string& id) const;
  const RecordingSession& session(const std::string& id) const;
  std::vector<Annotation> hidden_annotations(const std::string& id) const;

  // Loads every session referenced by the manifest up front.
  void preload(const DatasetManifest& manifest) const;

  AudioClip window(const LabeledSample& sample) const;
  FilterbankFeature feature(const LabeledSample& sample) const;
  // Normalized with `stats`.
  FilterbankFeature feature(const LabeledSample& sample, const NormStats& stats) const;

 private:
  std::filesystem::path root_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::unique_ptr<RecordingSession>> cache_;
};

// Unsplit manifest from every session in the registry, sorted by session id.
DatasetManifest build_manifest(const SessionRegistry& registry,
                               const LabelRule& rule = call_coverage_rule());

// Mean/std over clean (noise-free) features of the train split.
NormStats train_norm_stats(const DatasetManifest& manifest, const SessionRegistry& registry);

// Uniform random assignment of round(fraction * n) samples to train, seeded.
// Recomputes norm_stats on the train split.
DatasetManifest split_train_test(const DatasetManifest& manifest, double train_fraction,
                                 std::uint64_t seed, const SessionRegistry& registry);

// Assignment only; no statistics. Used by split_train_test.
DatasetManifest assign_split(const DatasetManifest& manifest, double train_fraction,
                             std::uint64_t seed);

// Additive white Gaussian noise at `snr_db` relative to the clip's mean
// square. An all-zero clip is returned unchanged.
AudioClip inject_noise(const AudioClip& clip, double snr_db, std::mt19937_64& rng);

// positive = 1, negative = 20 * n_pos / n_neg on the train split.
ClassWeights class_weights(const DatasetManifest& manifest);
ClassWeights class_weights(ClassCounts train);

std::string manifest_to_text(const DatasetManifest& manifest);
DatasetManifest manifest_from_text(const std::string& text,
                                   std::vector<std::string>* warnings = nullptr);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path,
                              std::vector<std::string>* warnings = nullptr);

// Window geometry helpers shared by feedback and server.
std::string candidate_id(const std::string& session_id, double window_start_s);

const char* to_string(Label label);
const char* to_string(Origin origin);
const char* to_string(Split split);

}  // namespace manatee
