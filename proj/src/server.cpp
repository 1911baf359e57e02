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

#include "manatee/server.hpp"

#include <httplib.h>

#include <charconv>
#include <cstdlib>

#include <nlohmann/json.hpp>

#include "manatee/errors.hpp"
#include "manatee/model.hpp"

namespace manatee {
namespace {

using nlohmann::json;

constexpr std::size_t kMaxPageSize = 1000;
constexpr std::size_t kDefaultPageSize = 50;

void send_error(httplib::Response& res, int status, const std::string& error,
                const std::string& detail) {
  res.status = status;
  res.set_content(json{{"error", error}, {"detail", detail}}.dump(), "application/json");
}

void send_json(httplib::Response& res, const json& body) {
  res.status = 200;
  res.set_content(body.dump(), "application/json");
}

std::size_t parse_count(const httplib::Request& req, const char* name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  const std::string v = req.get_param_value(name);
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ArgumentError(std::string(name) + " must be a non-negative integer, got '" + v + "'");
  }
  return out;
}

json candidate_json(const Candidate& c) {
  json j = {{"id", c.id},
            {"score", c.score},
            {"session_id", c.session_id},
            {"window_start_s", c.window_start_s},
            {"status", to_string(c.status)}};
  if (c.decided_at) j["decided_at"] = *c.decided_at;
  if (c.reviewer_note) j["note"] = *c.reviewer_note;
  return j;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

}  // namespace

void ServerConfig::apply_environment() {
  host = env_or("MANATEE_HOST", host);
  const std::string p = env_or("MANATEE_PORT", "");
  if (!p.empty()) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), v);
    if (ec != std::errc() || ptr != p.data() + p.size() || v < 0 || v > 65535) {
      throw ArgumentError("MANATEE_PORT must be a port number, got '" + p + "'");
    }
    port = v;
  }
  manifest = env_or("MANATEE_MANIFEST", manifest.string());
  checkpoint = env_or("MANATEE_CHECKPOINT", checkpoint.string());
  registry = env_or("MANATEE_REGISTRY", registry.string());
  store = env_or("MANATEE_STORE", store.string());
}

struct ReviewServer::Impl {
  DatasetManifest manifest;
  NormStats stats;
  std::shared_ptr<SessionRegistry> registry;
  std::shared_ptr<ReviewStore> store;
  httplib::Server http;

  void routes();
  // Candidate for an id or a 404 response.
  std::optional<Candidate> lookup(const std::string& id, httplib::Response& res) const;
  LabeledSample sample_of(const Candidate& c) const {
    LabeledSample s;
    s.session_id = c.session_id;
    s.window_start_s = c.window_start_s;
    return s;
  }
};

std::optional<Candidate> ReviewServer::Impl::lookup(const std::string& id,
                                                    httplib::Response& res) const {
  auto c = store->find(id);
  if (!c) send_error(res, 404, "not_found", "no candidate with id " + id);
  return c;
}

void ReviewServer::Impl::routes() {
  http.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                                std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const ArgumentError& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const NotFoundError& e) {
      send_error(res, 404, "not_found", e.what());
    } catch (const ConflictError& e) {
      send_error(res, 409, "conflict", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    } catch (...) {
      send_error(res, 500, "internal", "unknown error");
    }
  });
  http.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.body.empty()) {
      send_error(res, res.status, res.status == 404 ? "not_found" : "error",
                 "no route for " + req.method + " " + req.path);
    }
  });

  http.Get("/api/candidates", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string status_name =
        req.has_param("status") ? req.get_param_value("status") : std::string("pending");
    std::optional<CandidateStatus> status;
    if (status_name == "pending") status = CandidateStatus::kPending;
    else if (status_name == "confirmed") status = CandidateStatus::kConfirmed;
    else if (status_name == "rejected") status = CandidateStatus::kRejected;
    else if (status_name != "all") {
      throw ArgumentError("status must be pending, confirmed, rejected or all; got '" +
                          status_name + "'");
    }
    const std::size_t offset = parse_count(req, "offset", 0);
    const std::size_t limit = parse_count(req, "limit", kDefaultPageSize);
    if (limit == 0 || limit > kMaxPageSize) {
      throw ArgumentError("limit must be between 1 and " + std::to_string(kMaxPageSize));
    }
    const auto all = status ? store->snapshot(*status) : store->snapshot();
    json items = json::array();
    for (std::size_t i = offset; i < all.size() && i < offset + limit; ++i) {
      items.push_back(candidate_json(all[i]));
    }
    send_json(res, {{"total", all.size()},
                    {"offset", offset},
                    {"limit", limit},
                    {"status", status_name},
                    {"items", std::move(items)}});
  });

  http.Get(R"(/api/candidates/([^/]+)/spectrogram)",
           [this](const httplib::Request& req, httplib::Response& res) {
             const auto c = lookup(req.matches[1], res);
             if (!c) return;
             if (!registry->has_audio(c->session_id)) {
               send_error(res, 410, "gone", "audio for session " + c->session_id + " is missing");
               return;
             }
             const FilterbankFeature f = registry->feature(sample_of(*c), stats);
             const auto& bank = default_filterbank();
             std::vector<double> frame_s(kFrames);
             for (std::size_t t = 0; t < kFrames; ++t) {
               frame_s[t] = c->window_start_s +
                            static_cast<double>(t * kHopLength) / kSampleRateHz;
             }
             send_json(res, {{"id", c->id},
                             {"rows", kMelBins},
                             {"cols", kFrames},
                             {"layout", "row-major, rows are mel bins (low to high)"},
                             {"normalized", true},
                             {"values", f.values},
                             {"mel_center_hz", bank.centers_hz},
                             {"frame_start_s", frame_s},
                             {"hop_s", static_cast<double>(kHopLength) / kSampleRateHz},
                             {"frame_length_s", static_cast<double>(kFrameLength) / kSampleRateHz}});
           });

  http.Get(R"(/api/candidates/([^/]+)/audio)",
           [this](const httplib::Request& req, httplib::Response& res) {
             const auto c = lookup(req.matches[1], res);
             if (!c) return;
             if (!registry->has_audio(c->session_id)) {
               send_error(res, 410, "gone", "audio for session " + c->session_id + " is missing");
               return;
             }
             const auto bytes = encode_wav(registry->window(sample_of(*c)), SampleEncoding::kPcm16);
             res.status = 200;
             res.set_content(std::string(bytes.begin(), bytes.end()), "audio/wav");
           });

  http.Post(R"(/api/candidates/([^/]+)/decision)",
            [this](const httplib::Request& req, httplib::Response& res) {
              const std::string id = req.matches[1];
              json body;
              try {
                body = json::parse(req.body);
              } catch (const json::exception&) {
                throw ArgumentError("request body must be JSON");
              }
              if (!body.is_object() || !body.contains("decision") || !body["decision"].is_string()) {
                throw ArgumentError("body needs a string field 'decision'");
              }
              std::string note;
              if (body.contains("note")) {
                if (!body["note"].is_string()) throw ArgumentError("'note' must be a string");
                note = body["note"].get<std::string>();
              }
              const Decision d = parse_decision(body["decision"].get<std::string>());
              send_json(res, candidate_json(store->decide(id, d, note)));
            });

  http.Get("/api/stats", [this](const httplib::Request&, httplib::Response& res) {
    const auto snapshot = store->snapshot();
    ReviewCounts rc;
    const ClassCounts all = manifest.counts();
    const ClassCounts train = manifest.counts(Split::kTrain);
    std::size_t new_pos = 0, new_train_pos = 0;
    for (const auto& c : snapshot) {
      if (c.status == CandidateStatus::kPending) ++rc.pending;
      else if (c.status == CandidateStatus::kRejected) ++rc.rejected;
      else {
        ++rc.confirmed;
        const auto idx = manifest.find(c.session_id, c.window_start_s);
        if (idx && manifest.samples[*idx].label == Label::kNegative) {
          ++new_pos;
          if (manifest.samples[*idx].split == Split::kTrain) ++new_train_pos;
        }
      }
    }
    auto rate = [](std::size_t pos, std::size_t total) {
      return total > 0 ? static_cast<double>(pos) / static_cast<double>(total) : 0.0;
    };
    send_json(res, {{"pending", rc.pending},
                    {"confirmed", rc.confirmed},
                    {"rejected", rc.rejected},
                    {"n_pos", all.n_pos},
                    {"n_neg", all.n_neg},
                    {"positive_rate", rate(all.n_pos, all.total())},
                    {"train_n_pos", train.n_pos},
                    {"train_n_neg", train.n_neg},
                    {"projected_n_pos", all.n_pos + new_pos},
                    {"projected_n_neg", all.n_neg - new_pos},
                    {"projected_train_n_pos", train.n_pos + new_train_pos},
                    {"projected_positive_rate", rate(all.n_pos + new_pos, all.total())}});
  });
}

ReviewServer::ReviewServer(const ServerConfig& config) : impl_(std::make_unique<Impl>()) {
  auto require = [](const std::filesystem::path& p, const char* what) {
    if (p.empty() || !std::filesystem::exists(p)) {
      throw IoError(std::string(what) + " not found: '" + p.string() + "'");
    }
  };
  require(config.manifest, "manifest");
  require(config.checkpoint, "checkpoint");
  if (config.store.empty()) throw IoError("review store path is required");
  require(config.store, "review store");
  impl_->manifest = load_manifest(config.manifest);
  impl_->stats = load_checkpoint(config.checkpoint).norm_stats;
  const auto reg = config.registry.empty() ? std::filesystem::path(impl_->manifest.registry)
                                           : config.registry;
  require(reg, "session registry");
  impl_->registry = std::make_shared<SessionRegistry>(reg);
  impl_->store = std::make_shared<ReviewStore>(config.store);
  impl_->routes();
}

ReviewServer::ReviewServer(DatasetManifest manifest, NormStats stats,
                           std::shared_ptr<SessionRegistry> registry,
                           std::shared_ptr<ReviewStore> store)
    : impl_(std::make_unique<Impl>()) {
  impl_->manifest = std::move(manifest);
  impl_->stats = stats;
  impl_->registry = std::move(registry);
  impl_->store = std::move(store);
  impl_->routes();
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->http.bind_to_any_port(host);
    if (p < 0) throw IoError("cannot bind " + host);
    return p;
  }
  if (!impl_->http.bind_to_port(host, port)) {
    throw IoError("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void ReviewServer::run() { impl_->http.listen_after_bind(); }

void ReviewServer::stop() {
  if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

bool ReviewServer::running() const { return impl_->http.is_running(); }

void ReviewServer::wait_until_ready() const { impl_->http.wait_until_ready(); }

ReviewStore& ReviewServer::store() { return *impl_->store; }

}  // namespace manatee
