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
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "manatee/dataset.hpp"
#include "manatee/model.hpp"
#include "manatee/synth.hpp"
#include "manatee/traineval.hpp"

namespace manatee {

enum class CandidateStatus { kPending, kConfirmed, kRejected };
enum class Decision { kConfirm, kReject };

struct Candidate {
  std::string id;  // "<session>@<window start in ms>"
  std::string session_id;
  double window_start_s = 0.0;
  double score = 0.0;
  CandidateStatus status = CandidateStatus::kPending;
  std::optional<std::string> decided_at;
  std::optional<std::string> reviewer_note;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

const char* to_string(CandidateStatus status);
const char* to_string(Decision decision);
Decision parse_decision(const std::string& text);  // "confirm" | "reject"

// Score descending, id ascending.
bool candidate_before(const Candidate& a, const Candidate& b);

struct ReviewCounts {
  std::size_t pending = 0, confirmed = 0, rejected = 0;
};

// Candidate queue backed by an append-only newline-delimited JSON log. The
// status view is always the replay of the log. One writer at a time; readers
// get consistent snapshots.
class ReviewStore {
 public:
  ReviewStore() = default;  // in memory only
  // Replays the log at `path` (created on first append if missing). A
  // trailing record without a newline is treated as a torn write and dropped.
  explicit ReviewStore(std::filesystem::path path);

  ReviewStore(const ReviewStore&) = delete;
  ReviewStore& operator=(const ReviewStore&) = delete;

  static std::unique_ptr<ReviewStore> from_log(const std::string& text);

  const std::optional<std::filesystem::path>& path() const { return path_; }

  // Appends a pending candidate for each id not already in the store;
  // returns how many were added.
  std::size_t add_candidates(std::span<const Candidate> candidates);

  // NotFoundError for an unknown id, ConflictError if already decided.
  Candidate decide(const std::string& id, Decision decision, const std::string& note = "");

  std::optional<Candidate> find(const std::string& id) const;
  std::vector<Candidate> snapshot() const;  // candidate_before order
  std::vector<Candidate> snapshot(CandidateStatus status) const;
  ReviewCounts counts() const;
  bool contains(const std::string& id) const;

  std::string log_text() const;
  std::size_t dropped_records() const { return dropped_; }

 private:
  void replay(const std::string& text, bool tolerate_torn_tail);
  void apply_record(const std::string& line, std::size_t line_no);
  void write_log(const std::string& data);

  std::optional<std::filesystem::path> path_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Candidate> candidates_;
  std::vector<std::string> log_;
  std::size_t dropped_ = 0;
};

// Negative samples with score >= threshold, score descending (id tiebreak),
// truncated to `limit`. Ids already decided in `exclude` are skipped.
std::vector<Candidate> mine_candidates(const Checkpoint& checkpoint, const DatasetManifest& manifest,
                                       const SessionRegistry& registry, double threshold = 0.5,
                                       std::optional<std::size_t> limit = std::nullopt,
                                       const ReviewStore* exclude = nullptr);

// Same, from precomputed scores aligned with manifest.samples.
std::vector<Candidate> candidates_from_scores(const DatasetManifest& manifest,
                                              std::span<const double> scores, double threshold,
                                              std::optional<std::size_t> limit = std::nullopt,
                                              const ReviewStore* exclude = nullptr);

std::string decisions_fingerprint(const ReviewStore& store);

// Confirmed candidates become positive with origin feedback; splits and
// normalization statistics are kept. ConsistencyError if a decision names a
// window that is not in the manifest.
DatasetManifest apply_decisions(const DatasetManifest& manifest, const ReviewStore& store);

struct FeedbackExperimentConfig {
  SynthConfig synth = SynthConfig::benchmark();
  std::size_t sessions = 20;
  ModelConfig model = ModelConfig::desk();
  TrainRecipe recipe;
  double train_fraction = 0.7;
  double mine_threshold = 0.5;
  std::uint64_t seed = 0;
  std::filesystem::path work_dir;  // registry is written here
};

struct FeedbackReport {
  std::uint64_t seed = 0;
  ClassCounts train_before, train_after;
  ClassCounts all_before, all_after;
  // Held-out metrics against each model's own dataset labels.
  Metrics before, after;
  // Held-out metrics against the full ground truth.
  Metrics before_truth, after_truth;
  std::size_t candidates = 0;
  std::size_t confirmed = 0;
  std::size_t hidden_windows = 0;
  std::size_t recovered_windows = 0;
  double recovered_fraction = 0.0;  // |confirmed and hidden| / |hidden|
};

FeedbackReport feedback_experiment(const FeedbackExperimentConfig& config,
                                   const EpochCallback& on_epoch = {});

std::string feedback_report_text(std::span<const FeedbackReport> reports);
std::string feedback_report_json(std::span<const FeedbackReport> reports);

}  // namespace manatee
