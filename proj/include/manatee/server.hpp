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

#include <filesystem>
#include <memory>
#include <string>

#include "manatee/dataset.hpp"
#include "manatee/feedback.hpp"

namespace manatee {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path manifest;
  std::filesystem::path checkpoint;
  std::filesystem::path registry;  // empty: the manifest's registry
  std::filesystem::path store;

  // Environment overrides: MANATEE_HOST, MANATEE_PORT, MANATEE_MANIFEST,
  // MANATEE_CHECKPOINT, MANATEE_REGISTRY, MANATEE_STORE.
  void apply_environment();
};

// JSON review API over a manifest, its session registry and a decision log.
//
//   GET  /api/candidates?status=&offset=&limit=
//   GET  /api/candidates/{id}/spectrogram
//   GET  /api/candidates/{id}/audio
//   POST /api/candidates/{id}/decision   {"decision": "confirm"|"reject", "note": "..."}
//   GET  /api/stats
class ReviewServer {
 public:
  // Loads every referenced file; IoError if one is missing.
  explicit ReviewServer(const ServerConfig& config);
  ReviewServer(DatasetManifest manifest, NormStats stats, std::shared_ptr<SessionRegistry> registry,
               std::shared_ptr<ReviewStore> store);
  ~ReviewServer();

  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  // Binds and returns the port (useful with port 0).
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void run();
  void stop();
  bool running() const;
  void wait_until_ready() const;

  ReviewStore& store();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace manatee
