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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace manatee {

inline constexpr int kSampleRateHz = 48000;

struct AudioClip {
  std::vector<float> samples;
  int sample_rate_hz = kSampleRateHz;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

// A positive-only call annotation in seconds.
struct Annotation {
  double start_s = 0.0;
  double end_s = 0.0;

  double duration_s() const { return end_s - start_s; }
  friend bool operator==(const Annotation&, const Annotation&) = default;
};

// Annotations mark confirmed calls only. An unannotated region may still
// contain a call.
struct RecordingSession {
  std::string id;
  AudioClip clip;
  std::vector<Annotation> annotations;  // sorted by start_s

  double duration_s() const { return clip.duration_s(); }
};

enum class SampleEncoding { kPcm16, kPcm24, kFloat32 };

// Reads RIFF/WAVE with 16/24-bit integer or 32-bit float samples. Only
// channel 0 of multi-channel files is kept. Throws RateError for anything
// other than 48 kHz and FormatError for other encodings.
AudioClip load_wav(const std::filesystem::path& path);
AudioClip decode_wav(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_wav(const AudioClip& clip,
                                     SampleEncoding encoding = SampleEncoding::kPcm16);
void save_wav(const std::filesystem::path& path, const AudioClip& clip,
              SampleEncoding encoding = SampleEncoding::kPcm16);

// CSV with header `start_s,end_s`. Result is sorted by start_s.
std::vector<Annotation> load_annotations(const std::filesystem::path& path);
std::vector<Annotation> parse_annotations(const std::string& text);
std::string format_annotations(std::span<const Annotation> annotations);
void save_annotations(const std::filesystem::path& path,
                      std::span<const Annotation> annotations);

// Returns exactly round(dur_s * 48000) samples starting at round(start_s *
// 48000); anything past the end of the session is zero.
AudioClip cut_clip(const RecordingSession& session, double start_s, double dur_s);

// Sorts annotations and checks them against the clip duration.
void validate_session(RecordingSession& session);

}  // namespace manatee
