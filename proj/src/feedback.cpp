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

#include "manatee/feedback.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "manatee/errors.hpp"
#include "manatee/util.hpp"

namespace manatee {
namespace {

using nlohmann::json;

CandidateStatus status_of(Decision d) {
  return d == Decision::kConfirm ? CandidateStatus::kConfirmed : CandidateStatus::kRejected;
}

void write_all(int fd, const std::string& data, const std::string& where) {
  const char* p = data.data();
  std::size_t left = data.size();
  while (left > 0) {
    const ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("append to " + where + " failed: " + std::strerror(errno));
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
}

}  // namespace

const char* to_string(CandidateStatus status) {
  switch (status) {
    case CandidateStatus::kConfirmed:
      return "confirmed";
    case CandidateStatus::kRejected:
      return "rejected";
    case CandidateStatus::kPending:
      break;
  }
  return "pending";
}

const char* to_string(Decision decision) {
  return decision == Decision::kConfirm ? "confirm" : "reject";
}

Decision parse_decision(const std::string& text) {
  if (text == "confirm") return Decision::kConfirm;
  if (text == "reject") return Decision::kReject;
  throw ArgumentError("decision must be 'confirm' or 'reject', got '" + text + "'");
}

bool candidate_before(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

ReviewStore::ReviewStore(std::filesystem::path path) : path_(std::move(path)) {
  if (std::filesystem::exists(*path_)) replay(read_file(*path_), true);
}

std::unique_ptr<ReviewStore> ReviewStore::from_log(const std::string& text) {
  auto store = std::make_unique<ReviewStore>();
  store->replay(text, false);
  return store;
}

void ReviewStore::replay(const std::string& text, bool tolerate_torn_tail) {
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    ++line_no;
    if (nl == std::string::npos) {
      const std::string tail = text.substr(pos);
      try {
        apply_record(tail, line_no);
        log_.push_back(tail);
      } catch (const FormatError&) {
        if (!tolerate_torn_tail) throw;
        ++dropped_;
      }
      break;
    }
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    apply_record(line, line_no);
    log_.push_back(line);
  }
  if (dropped_ > 0 && path_) {
    // rewrite without the torn record so later appends start on a clean line
    std::string clean;
    for (const auto& l : log_) clean += l + "\n";
    atomic_write_file(*path_, clean);
  }
}

void ReviewStore::apply_record(const std::string& line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError("review log line " + std::to_string(line_no) + ": " + e.what());
  }
  try {
    const std::string type = j.at("type").get<std::string>();
    const std::string id = j.at("id").get<std::string>();
    if (type == "candidate") {
      if (candidates_.count(id)) return;
      Candidate c;
      c.id = id;
      c.session_id = j.at("session_id").get<std::string>();
      c.window_start_s = j.at("window_start_s").get<double>();
      c.score = j.at("score").get<double>();
      candidates_.emplace(id, std::move(c));
    } else if (type == "decision") {
      auto it = candidates_.find(id);
      if (it == candidates_.end()) {
        throw ConsistencyError("review log line " + std::to_string(line_no) +
                               ": decision for unknown candidate " + id);
      }
      if (it->second.status != CandidateStatus::kPending) {
        throw ConsistencyError("review log line " + std::to_string(line_no) + ": candidate " + id +
                               " decided twice");
      }
      it->second.status = status_of(parse_decision(j.at("decision").get<std::string>()));
      it->second.decided_at = j.at("timestamp").get<std::string>();
      if (j.contains("note") && !j["note"].get<std::string>().empty()) {
        it->second.reviewer_note = j["note"].get<std::string>();
      }
    } else {
      throw FormatError("review log line " + std::to_string(line_no) + ": unknown record type '" +
                        type + "'");
    }
  } catch (const json::exception& e) {
    throw FormatError("review log line " + std::to_string(line_no) + ": " + e.what());
  }
}

void ReviewStore::write_log(const std::string& data) {
  if (!path_) return;
  const int fd = ::open(path_->c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("cannot open " + path_->string() + ": " + std::strerror(errno));
  try {
    write_all(fd, data, path_->string());
    if (::fsync(fd) != 0) throw IoError("fsync " + path_->string() + " failed");
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
}

std::size_t ReviewStore::add_candidates(std::span<const Candidate> candidates) {
  std::unique_lock lock(mutex_);
  std::string batch;
  std::vector<std::string> lines;
  std::set<std::string> seen;
  for (const auto& c : candidates) {
    if (candidates_.count(c.id) || !seen.insert(c.id).second) continue;
    lines.push_back(json{{"type", "candidate"},
                         {"id", c.id},
                         {"session_id", c.session_id},
                         {"window_start_s", c.window_start_s},
                         {"score", c.score}}
                        .dump());
    batch += lines.back() + "\n";
  }
  if (lines.empty()) return 0;
  write_log(batch);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    apply_record(lines[i], log_.size() + 1);
    log_.push_back(lines[i]);
  }
  return lines.size();
}

Candidate ReviewStore::decide(const std::string& id, Decision decision, const std::string& note) {
  std::unique_lock lock(mutex_);
  auto it = candidates_.find(id);
  if (it == candidates_.end()) throw NotFoundError("no candidate with id " + id);
  if (it->second.status != CandidateStatus::kPending) {
    throw ConflictError("candidate " + id + " is already " + to_string(it->second.status));
  }
  json rec = {{"type", "decision"},
              {"id", id},
              {"decision", to_string(decision)},
              {"timestamp", utc_timestamp()}};
  if (!note.empty()) rec["note"] = note;
  const std::string line = rec.dump();
  write_log(line + "\n");
  log_.push_back(line);
  apply_record(line, log_.size());
  return it->second;
}

std::optional<Candidate> ReviewStore::find(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = candidates_.find(id);
  if (it == candidates_.end()) return std::nullopt;
  return it->second;
}

bool ReviewStore::contains(const std::string& id) const {
  std::shared_lock lock(mutex_);
  return candidates_.count(id) > 0;
}

std::vector<Candidate> ReviewStore::snapshot() const {
  std::shared_lock lock(mutex_);
  std::vector<Candidate> out;
  out.reserve(candidates_.size());
  for (const auto& [id, c] : candidates_) out.push_back(c);
  std::sort(out.begin(), out.end(), candidate_before);
  return out;
}

std::vector<Candidate> ReviewStore::snapshot(CandidateStatus status) const {
  auto all = snapshot();
  all.erase(std::remove_if(all.begin(), all.end(),
                           [&](const Candidate& c) { return c.status != status; }),
            all.end());
  return all;
}

ReviewCounts ReviewStore::counts() const {
  std::shared_lock lock(mutex_);
  ReviewCounts c;
  for (const auto& [id, cand] : candidates_) {
    switch (cand.status) {
      case CandidateStatus::kPending:
        ++c.pending;
        break;
      case CandidateStatus::kConfirmed:
        ++c.confirmed;
        break;
      case CandidateStatus::kRejected:
        ++c.rejected;
        break;
    }
  }
  return c;
}

std::string ReviewStore::log_text() const {
  std::shared_lock lock(mutex_);
  std::string out;
  for (const auto& l : log_) out += l + "\n";
  return out;
}

std::vector<Candidate> candidates_from_scores(const DatasetManifest& manifest,
                                              std::span<const double> scores, double threshold,
                                              std::optional<std::size_t> limit,
                                              const ReviewStore* exclude) {
  if (scores.size() != manifest.samples.size()) {
    throw ShapeError("candidates_from_scores: one score per manifest sample expected");
  }
  std::vector<Candidate> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& s = manifest.samples[i];
    if (s.label != Label::kNegative || scores[i] < threshold) continue;
    Candidate c;
    c.id = candidate_id(s.session_id, s.window_start_s);
    c.session_id = s.session_id;
    c.window_start_s = s.window_start_s;
    c.score = scores[i];
    if (exclude) {
      auto prior = exclude->find(c.id);
      if (prior && prior->status != CandidateStatus::kPending) continue;
    }
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), candidate_before);
  if (limit && out.size() > *limit) out.resize(*limit);
  return out;
}

std::vector<Candidate> mine_candidates(const Checkpoint& checkpoint, const DatasetManifest& manifest,
                                       const SessionRegistry& registry, double threshold,
                                       std::optional<std::size_t> limit,
                                       const ReviewStore* exclude) {
  std::vector<std::size_t> all(manifest.samples.size());
  std::iota(all.begin(), all.end(), 0);
  const auto scores = score_samples(checkpoint, manifest, registry, all);
  return candidates_from_scores(manifest, scores, threshold, limit, exclude);
}

std::string decisions_fingerprint(const ReviewStore& store) {
  std::string text;
  for (const auto& c : store.snapshot()) {
    if (c.status == CandidateStatus::kPending) continue;
    text += c.id + "=" + to_string(c.status) + "\n";
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
  return buf;
}

DatasetManifest apply_decisions(const DatasetManifest& manifest, const ReviewStore& store) {
  const std::string fingerprint = decisions_fingerprint(store);
  DatasetManifest out = manifest;
  for (const auto& c : store.snapshot()) {
    if (c.status == CandidateStatus::kPending) continue;
    const auto idx = out.find(c.session_id, c.window_start_s);
    if (!idx) {
      throw ConsistencyError("decision for " + c.id + " names a window that is not in the manifest");
    }
    if (c.status == CandidateStatus::kConfirmed &&
        out.samples[*idx].label == Label::kNegative) {
      out.samples[*idx].label = Label::kPositive;
      out.samples[*idx].origin = Origin::kFeedback;
    }
  }
  if (manifest.feedback_fingerprint != fingerprint || !(out.samples == manifest.samples)) {
    out.revision = manifest.revision + 1;
    out.feedback_fingerprint = fingerprint;
  }
  out.warnings.erase(std::remove_if(out.warnings.begin(), out.warnings.end(),
                                    [](const std::string& w) {
                                      return w.rfind("train split has no positive", 0) == 0;
                                    }),
                     out.warnings.end());
  if (out.is_split() && out.counts(Split::kTrain).n_pos == 0) {
    out.warnings.push_back("train split has no positive samples");
  }
  return out;
}

FeedbackReport feedback_experiment(const FeedbackExperimentConfig& cfg,
                                   const EpochCallback& on_epoch) {
  if (cfg.sessions == 0) throw ArgumentError("feedback experiment needs at least one session");
  if (cfg.work_dir.empty()) throw ArgumentError("feedback experiment needs a work directory");

  FeedbackReport report;
  report.seed = cfg.seed;
  const auto sessions = synth_sessions(cfg.synth, cfg.seed, cfg.sessions);
  const auto registry_dir = cfg.work_dir / "registry";
  std::filesystem::remove_all(registry_dir);
  write_registry(registry_dir, sessions);
  SessionRegistry registry(registry_dir);

  const DatasetManifest visible =
      split_train_test(build_manifest(registry), cfg.train_fraction, cfg.seed, registry);

  // Ground-truth labels on the same windows and split.
  DatasetManifest truth = visible;
  {
    std::map<std::string, std::vector<Annotation>> all_calls;
    for (const auto& s : sessions) all_calls[s.session.id] = s.all_calls();
    const auto rule = call_coverage_rule();
    for (auto& s : truth.samples) {
      s.label = rule(all_calls.at(s.session_id), s.window_start_s, s.window_start_s + kWindowSeconds)
                    ? Label::kPositive
                    : Label::kNegative;
    }
  }
  std::set<std::size_t> hidden;
  for (std::size_t i = 0; i < truth.samples.size(); ++i) {
    if (truth.samples[i].label == Label::kPositive &&
        visible.samples[i].label == Label::kNegative) {
      hidden.insert(i);
    }
  }
  report.hidden_windows = hidden.size();

  TrainRecipe recipe = cfg.recipe;
  recipe.seed = derive_seed(cfg.seed, 0x747261696e /* "train" */);
  const auto before = train(visible, registry, cfg.model, recipe, on_epoch);
  report.before = evaluate(before.checkpoint, visible, registry, Split::kTest);
  report.before_truth = evaluate(before.checkpoint, truth, registry, Split::kTest);

  const auto candidates =
      mine_candidates(before.checkpoint, visible, registry, cfg.mine_threshold);
  report.candidates = candidates.size();
  ReviewStore store;
  store.add_candidates(candidates);
  const auto rule = call_coverage_rule();
  for (const auto& c : candidates) {
    const auto hidden_calls = registry.hidden_annotations(c.session_id);
    const bool is_call = rule(hidden_calls, c.window_start_s, c.window_start_s + kWindowSeconds);
    store.decide(c.id, is_call ? Decision::kConfirm : Decision::kReject, "oracle");
    if (is_call) {
      ++report.confirmed;
      if (hidden.count(*visible.find(c.session_id, c.window_start_s))) ++report.recovered_windows;
    }
  }
  report.recovered_fraction =
      hidden.empty() ? 0.0
                     : static_cast<double>(report.recovered_windows) /
                           static_cast<double>(hidden.size());

  const DatasetManifest corrected = apply_decisions(visible, store);
  const auto after = train(corrected, registry, cfg.model, recipe, on_epoch);
  report.after = evaluate(after.checkpoint, corrected, registry, Split::kTest);
  report.after_truth = evaluate(after.checkpoint, truth, registry, Split::kTest);

  report.train_before = visible.counts(Split::kTrain);
  report.train_after = corrected.counts(Split::kTrain);
  report.all_before = visible.counts();
  report.all_after = corrected.counts();
  return report;
}

std::string feedback_report_text(std::span<const FeedbackReport> reports) {
  std::ostringstream os;
  char line[256];
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line,
                  "seed %llu: positives %zu -> %zu (train %zu -> %zu), candidates %zu, "
                  "confirmed %zu, recovered %zu/%zu (%.3f)\n",
                  static_cast<unsigned long long>(r.seed), r.all_before.n_pos, r.all_after.n_pos,
                  r.train_before.n_pos, r.train_after.n_pos, r.candidates, r.confirmed,
                  r.recovered_windows, r.hidden_windows, r.recovered_fraction);
    os << line;
    std::snprintf(line, sizeof line,
                  "  held-out F1 %.3f -> %.3f (own labels), %.3f -> %.3f (ground truth)\n",
                  r.before.f1, r.after.f1, r.before_truth.f1, r.after_truth.f1);
    os << line;
  }
  if (reports.size() >= 2) {
    std::vector<Metrics> a, b;
    for (const auto& r : reports) {
      a.push_back(r.before);
      b.push_back(r.after);
    }
    os << compare_runs(a, b);
  }
  return os.str();
}

std::string feedback_report_json(std::span<const FeedbackReport> reports) {
  auto metrics = [](const Metrics& m) {
    return json{{"tp", m.tp},         {"fp", m.fp},         {"fn", m.fn},
                {"tn", m.tn},         {"precision", m.precision}, {"recall", m.recall},
                {"f1", m.f1},         {"threshold", m.threshold}};
  };
  json arr = json::array();
  for (const auto& r : reports) {
    arr.push_back({{"seed", r.seed},
                   {"positives_before", r.all_before.n_pos},
                   {"positives_after", r.all_after.n_pos},
                   {"train_positives_before", r.train_before.n_pos},
                   {"train_positives_after", r.train_after.n_pos},
                   {"candidates", r.candidates},
                   {"confirmed", r.confirmed},
                   {"hidden_windows", r.hidden_windows},
                   {"recovered_windows", r.recovered_windows},
                   {"recovered_fraction", r.recovered_fraction},
                   {"before", metrics(r.before)},
                   {"after", metrics(r.after)},
                   {"before_truth", metrics(r.before_truth)},
                   {"after_truth", metrics(r.after_truth)}});
  }
  return arr.dump(2) + "\n";
}

}  // namespace manatee
