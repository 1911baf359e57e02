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

#include <gtest/gtest.h>

#include <cstring>

#include "manatee/audio_io.hpp"
#include "manatee/errors.hpp"
#include "test_support.hpp"

namespace manatee {
namespace {

using testing::TempDir;

std::vector<std::uint8_t> wav_header(std::uint16_t format, std::uint16_t channels,
                                     std::uint32_t rate, std::uint16_t bits,
                                     std::uint32_t data_bytes, bool extensible = false) {
  std::vector<std::uint8_t> out;
  auto u16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  };
  auto tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };
  const std::uint32_t fmt_size = extensible ? 40 : 16;
  tag("RIFF");
  u32(4 + 8 + fmt_size + 8 + data_bytes);
  tag("WAVE");
  tag("fmt ");
  u32(fmt_size);
  u16(extensible ? 0xFFFE : format);
  u16(channels);
  u32(rate);
  u32(rate * channels * bits / 8);
  u16(static_cast<std::uint16_t>(channels * bits / 8));
  u16(bits);
  if (extensible) {
    u16(22);
    u16(bits);
    u32(0);
    // sub-format GUID: first two bytes carry the format code
    u16(format);
    const std::uint8_t tail[14] = {0x00, 0x00, 0x00, 0x00, 0x10, 0x00, 0x80,
                                   0x00, 0x00, 0xAA, 0x00, 0x38, 0x9B, 0x71};
    out.insert(out.end(), tail, tail + 14);
  }
  tag("data");
  u32(data_bytes);
  return out;
}

TEST(Wav, RoundTripPcm16WithinQuantization) {
  const auto clip = testing::sine_clip(3000.0, 0.1);
  const auto back = decode_wav(encode_wav(clip, SampleEncoding::kPcm16));
  ASSERT_EQ(back.samples.size(), clip.samples.size());
  EXPECT_EQ(back.sample_rate_hz, kSampleRateHz);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    EXPECT_NEAR(back.samples[i], clip.samples[i], 1.0 / 32767.0);
  }
}

TEST(Wav, RoundTripPcm24AndFloat) {
  const auto clip = testing::sine_clip(2500.0, 0.05, 0.9);
  const auto b24 = decode_wav(encode_wav(clip, SampleEncoding::kPcm24));
  const auto bf = decode_wav(encode_wav(clip, SampleEncoding::kFloat32));
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    EXPECT_NEAR(b24.samples[i], clip.samples[i], 1.0 / 8388607.0);
    EXPECT_EQ(bf.samples[i], clip.samples[i]);
  }
}

TEST(Wav, FullScaleValuesClampToUnitRange) {
  AudioClip clip;
  clip.samples = {1.5f, -2.0f, 1.0f, -1.0f};
  const auto back = decode_wav(encode_wav(clip, SampleEncoding::kPcm16));
  EXPECT_FLOAT_EQ(back.samples[0], 1.0f);
  EXPECT_FLOAT_EQ(back.samples[1], -1.0f);
  EXPECT_FLOAT_EQ(back.samples[2], 1.0f);
  EXPECT_FLOAT_EQ(back.samples[3], -1.0f);
}

TEST(Wav, WrongRateRaisesRateErrorWithObservedRate) {
  auto bytes = wav_header(1, 1, 44100, 16, 4);
  bytes.resize(bytes.size() + 4, 0);
  try {
    decode_wav(bytes);
    FAIL() << "expected RateError";
  } catch (const RateError& e) {
    EXPECT_EQ(e.observed_hz(), 44100);
    EXPECT_NE(std::string(e.what()).find("44100"), std::string::npos);
  }
}

TEST(Wav, StereoKeepsFirstChannel) {
  auto bytes = wav_header(1, 2, 48000, 16, 8);
  const std::int16_t frames[4] = {16384, -32767, -16384, 32767};
  const auto* raw = reinterpret_cast<const std::uint8_t*>(frames);
  bytes.insert(bytes.end(), raw, raw + 8);
  const auto clip = decode_wav(bytes);
  ASSERT_EQ(clip.samples.size(), 2u);
  EXPECT_NEAR(clip.samples[0], 0.5, 1e-4);
  EXPECT_NEAR(clip.samples[1], -0.5, 1e-4);
}

TEST(Wav, ExtensibleHeaderIsAccepted) {
  auto bytes = wav_header(1, 1, 48000, 16, 4, true);
  const std::int16_t s[2] = {32767, 0};
  const auto* raw = reinterpret_cast<const std::uint8_t*>(s);
  bytes.insert(bytes.end(), raw, raw + 4);
  const auto clip = decode_wav(bytes);
  ASSERT_EQ(clip.samples.size(), 2u);
  EXPECT_FLOAT_EQ(clip.samples[0], 1.0f);
}

TEST(Wav, GarbageAndTruncationAreFormatErrors) {
  const std::vector<std::uint8_t> junk(64, 0x41);
  EXPECT_THROW(decode_wav(junk), FormatError);
  auto bytes = encode_wav(testing::sine_clip(2000.0, 0.01));
  bytes.resize(20);
  EXPECT_THROW(decode_wav(bytes), FormatError);
}

TEST(Wav, MissingFileIsIoError) {
  EXPECT_THROW(load_wav("/nonexistent/path.wav"), IoError);
}

TEST(Wav, SaveAndLoadThroughFile) {
  TempDir dir("wav");
  const auto clip = testing::sine_clip(4000.0, 0.02);
  save_wav(dir / "a.wav", clip, SampleEncoding::kPcm24);
  EXPECT_EQ(load_wav(dir / "a.wav").samples.size(), clip.samples.size());
}

TEST(Annotations, ParsesSortsAndToleratesBom) {
  const auto a = parse_annotations("\xEF\xBB\xBFstart_s,end_s\n3.0,3.5\n1.0,1.25\r\n");
  ASSERT_EQ(a.size(), 2u);
  EXPECT_DOUBLE_EQ(a[0].start_s, 1.0);
  EXPECT_DOUBLE_EQ(a[1].end_s, 3.5);
}

TEST(Annotations, HeaderIsRequired) {
  EXPECT_THROW(parse_annotations("1.0,2.0\n"), ParseError);
  EXPECT_THROW(parse_annotations(""), ParseError);
}

TEST(Annotations, NonNumericFieldNamesRow) {
  try {
    parse_annotations("start_s,end_s\n1.0,2.0\nabc,3.0\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
}

TEST(Annotations, EmptyOrInvertedIntervalIsValidationError) {
  EXPECT_THROW(parse_annotations("start_s,end_s\n2.0,2.0\n"), ValidationError);
  EXPECT_THROW(parse_annotations("start_s,end_s\n2.0,1.0\n"), ValidationError);
}

TEST(Annotations, FormatRoundTrip) {
  const std::vector<Annotation> a = {{0.125, 0.5}, {10.0, 10.6}};
  EXPECT_EQ(parse_annotations(format_annotations(a)), a);
}

TEST(CutClip, ExactLengthAndZeroFillPastEnd) {
  RecordingSession s;
  s.id = "s";
  s.clip = testing::sine_clip(2000.0, 1.5);
  const auto w = cut_clip(s, 1.0, 1.0);
  ASSERT_EQ(w.samples.size(), 48000u);
  EXPECT_EQ(w.samples[0], s.clip.samples[48000]);
  EXPECT_EQ(w.samples[23999], s.clip.samples[71999]);
  for (std::size_t i = 24000; i < 48000; ++i) ASSERT_EQ(w.samples[i], 0.0f);
}

TEST(CutClip, NegativeArgumentsRejected) {
  RecordingSession s;
  s.clip = testing::sine_clip(2000.0, 1.0);
  EXPECT_THROW(cut_clip(s, -0.5, 1.0), ArgumentError);
}

}  // namespace
}  // namespace manatee
