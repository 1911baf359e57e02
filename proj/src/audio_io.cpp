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

#include "manatee/audio_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "manatee/errors.hpp"

namespace manatee {
namespace {

constexpr std::uint16_t kWaveFormatPcm = 1;
constexpr std::uint16_t kWaveFormatFloat = 3;
constexpr std::uint16_t kWaveFormatExtensible = 0xFFFE;

constexpr double kScale16 = 32767.0;
constexpr double kScale24 = 8388607.0;

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

float clamp_unit(double v) { return static_cast<float>(std::clamp(v, -1.0, 1.0)); }

double parse_field(std::string_view field, std::size_t row, const char* name) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
    field.remove_suffix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size() ||
      !std::isfinite(value)) {
    throw ParseError("annotations row " + std::to_string(row) + ": " + name +
                     " is not a number: '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE stream");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    std::uint32_t size = read_u32(chunk + 4);
    std::size_t body = pos + 8;
    std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || size > avail) throw FormatError("truncated fmt chunk");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == kWaveFormatExtensible) {
        if (size < 40) throw FormatError("truncated WAVE_FORMAT_EXTENSIBLE header");
        format = read_u16(chunk + 8 + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = std::min<std::size_t>(size, avail);
      if (have_fmt) break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw FormatError("missing fmt chunk");
  if (data == nullptr) throw FormatError("missing data chunk");
  if (channels == 0) throw FormatError("zero channels");

  const bool pcm16 = format == kWaveFormatPcm && bits == 16;
  const bool pcm24 = format == kWaveFormatPcm && bits == 24;
  const bool f32 = format == kWaveFormatFloat && bits == 32;
  if (!pcm16 && !pcm24 && !f32) {
    throw FormatError("unsupported encoding: format tag " + std::to_string(format) + ", " +
                      std::to_string(bits) + " bits");
  }
  if (rate != static_cast<std::uint32_t>(kSampleRateHz)) throw RateError(static_cast<int>(rate));

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame = bytes_per_sample * channels;
  const std::size_t n = data_size / frame;

  AudioClip clip;
  clip.sample_rate_hz = kSampleRateHz;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* p = data + i * frame;  // channel 0
    if (pcm16) {
      auto v = static_cast<std::int16_t>(read_u16(p));
      clip.samples[i] = clamp_unit(v / kScale16);
    } else if (pcm24) {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v |= ~0xFFFFFF;
      clip.samples[i] = clamp_unit(v / kScale24);
    } else {
      float v;
      std::memcpy(&v, p, 4);
      if (!std::isfinite(v)) {
        throw FormatError("non-finite sample at index " + std::to_string(i));
      }
      clip.samples[i] = v;
    }
  }
  return clip;
}

AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const RateError&) {
    throw;
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip, SampleEncoding encoding) {
  std::uint16_t bits = 16, format = kWaveFormatPcm;
  if (encoding == SampleEncoding::kPcm24) bits = 24;
  if (encoding == SampleEncoding::kFloat32) {
    bits = 32;
    format = kWaveFormatFloat;
  }
  const std::uint32_t bps = bits / 8;
  const auto data_size = static_cast<std::uint32_t>(clip.samples.size() * bps);

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * bps);
  put_u16(out, static_cast<std::uint16_t>(bps));
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_size);
  for (float s : clip.samples) {
    double v = std::clamp(static_cast<double>(s), -1.0, 1.0);
    if (encoding == SampleEncoding::kPcm16) {
      auto q = static_cast<std::int16_t>(std::lround(v * kScale16));
      put_u16(out, static_cast<std::uint16_t>(q));
    } else if (encoding == SampleEncoding::kPcm24) {
      auto q = static_cast<std::int32_t>(std::lround(v * kScale24));
      out.push_back(static_cast<std::uint8_t>(q & 0xFF));
      out.push_back(static_cast<std::uint8_t>((q >> 8) & 0xFF));
      out.push_back(static_cast<std::uint8_t>((q >> 16) & 0xFF));
    } else {
      std::uint32_t raw;
      std::memcpy(&raw, &s, 4);
      put_u32(out, raw);
    }
  }
  return out;
}

void save_wav(const std::filesystem::path& path, const AudioClip& clip, SampleEncoding encoding) {
  auto bytes = encode_wav(clip, encoding);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<Annotation> parse_annotations(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<Annotation> result;
  std::size_t row = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header_seen) {
      // tolerate a UTF-8 BOM
      if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
      if (line != "start_s,end_s") {
        throw ParseError("annotations header must be 'start_s,end_s', got '" + line + "'");
      }
      header_seen = true;
      continue;
    }
    ++row;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw ParseError("annotations row " + std::to_string(row) + ": expected two fields");
    }
    Annotation a;
    a.start_s = parse_field(std::string_view(line).substr(0, comma), row, "start_s");
    a.end_s = parse_field(std::string_view(line).substr(comma + 1), row, "end_s");
    if (a.start_s < 0.0) {
      throw ValidationError("annotations row " + std::to_string(row) + ": negative start_s");
    }
    if (a.start_s >= a.end_s) {
      throw ValidationError("annotations row " + std::to_string(row) +
                            ": start_s must be less than end_s");
    }
    result.push_back(a);
  }
  if (!header_seen) throw ParseError("annotations file is empty (missing header)");
  std::stable_sort(result.begin(), result.end(),
                   [](const Annotation& a, const Annotation& b) { return a.start_s < b.start_s; });
  return result;
}

std::vector<Annotation> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_annotations(buf.str());
}

std::string format_annotations(std::span<const Annotation> annotations) {
  std::string out = "start_s,end_s\n";
  char buf[64];
  for (const auto& a : annotations) {
    // %.17g keeps the round-trip exact
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", a.start_s, a.end_s);
    out += buf;
  }
  return out;
}

void save_annotations(const std::filesystem::path& path, std::span<const Annotation> annotations) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_annotations(annotations);
}

AudioClip cut_clip(const RecordingSession& session, double start_s, double dur_s) {
  if (!(start_s >= 0.0) || !(dur_s >= 0.0)) {
    throw ArgumentError("cut_clip: start and duration must be non-negative");
  }
  const auto first = static_cast<std::size_t>(std::llround(start_s * kSampleRateHz));
  const auto count = static_cast<std::size_t>(std::llround(dur_s * kSampleRateHz));
  AudioClip out;
  out.sample_rate_hz = kSampleRateHz;
  out.samples.assign(count, 0.0f);
  const auto& src = session.clip.samples;
  if (first < src.size()) {
    std::size_t n = std::min(count, src.size() - first);
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(first), n, out.samples.begin());
  }
  return out;
}

void validate_session(RecordingSession& session) {
  if (session.clip.sample_rate_hz != kSampleRateHz) throw RateError(session.clip.sample_rate_hz);
  std::stable_sort(session.annotations.begin(), session.annotations.end(),
                   [](const Annotation& a, const Annotation& b) { return a.start_s < b.start_s; });
  const double dur = session.duration_s();
  for (std::size_t i = 0; i < session.annotations.size(); ++i) {
    const auto& a = session.annotations[i];
    if (!(a.start_s >= 0.0 && a.start_s < a.end_s)) {
      throw ValidationError("session " + session.id + ": annotation " + std::to_string(i + 1) +
                            " has start_s >= end_s");
    }
    if (a.end_s > dur + 1e-9) {
      throw ValidationError("session " + session.id + ": annotation " + std::to_string(i + 1) +
                            " ends after the recording");
    }
  }
}

}  // namespace manatee
