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
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "manatee/audio_io.hpp"

namespace manatee {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct CountRange {
  int lo = 0;
  int hi = 0;
};

// Generator settings for synthetic hydrophone sessions with harmonic calls.
struct SynthConfig {
  Interval f0_range_hz{2000.0, 3900.0};
  int n_harmonics = 6;
  double harmonic_decay = 0.7;
  double sweep_fraction = 0.10;  // f0 moves linearly by up to +/- this fraction
  Interval duration_range_s{0.10, 0.60};
  Interval call_snr_db_range{0.0, 20.0};
  double session_length_s = 600.0;
  CountRange calls_per_session_range{3, 52};
  double distractor_rate_per_min = 6.0;
  Interval distractor_duration_s{0.02, 0.10};
  Interval distractor_snr_db_range{0.0, 20.0};
  double white_noise_std = 0.02;
  double pink_noise_std = 0.02;
  double withhold_fraction = 0.0;

  // Desk benchmark: 60 s sessions with a handful of calls (~5% positive
  // windows once labelled).
  static SynthConfig benchmark();

  // Throws ArgumentError when an invariant does not hold.
  void validate() const;
};

struct SynthCall {
  AudioClip clip;
  double duration_s = 0.0;
  double f0_start_hz = 0.0;
  double f0_end_hz = 0.0;
};

// Harmonic stack sum_h decay^(h-1) sin(phase_h(t)) with a linear f0 sweep and
// raised-cosine onset/offset (10% of the duration on each side).
SynthCall synth_call(const SynthConfig& cfg, std::mt19937_64& rng);
// Same with fixed f0 start/end and duration (no randomness in pitch).
SynthCall synth_call_fixed(const SynthConfig& cfg, double f0_start_hz, double f0_end_hz,
                           double duration_s, std::mt19937_64& rng);

struct SynthSession {
  RecordingSession session;             // visible annotations only
  std::vector<Annotation> hidden;       // withheld true calls
  std::vector<Annotation> distractors;  // broadband bursts (never annotated)

  std::vector<Annotation> all_calls() const;
};

SynthSession synth_session(const SynthConfig& cfg, std::mt19937_64& rng,
                           const std::string& id = "session_000");

// Generates `count` sessions with per-session seeds derived from `seed`.
std::vector<SynthSession> synth_sessions(const SynthConfig& cfg, std::uint64_t seed,
                                         std::size_t count);

// Writes `<id>.wav` (24-bit), `<id>.csv` and `<id>.hidden.csv` per session.
void write_registry(const std::filesystem::path& dir, const std::vector<SynthSession>& sessions);

std::string synth_config_to_json(const SynthConfig& cfg);
// Unknown keys are an error; missing keys keep the defaults of `base`.
SynthConfig synth_config_from_json(const std::string& text, const SynthConfig& base = {});

}  // namespace manatee
