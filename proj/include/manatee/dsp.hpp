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
#include <span>
#include <vector>

#include "manatee/audio_io.hpp"

namespace manatee {

inline constexpr std::size_t kMelBins = 64;
inline constexpr std::size_t kFrames = 128;
inline constexpr std::size_t kFrameLength = 750;
inline constexpr std::size_t kHopLength = 375;
inline constexpr std::size_t kFftBins = kFrameLength / 2 + 1;  // 376
inline constexpr std::size_t kClipSamples = 48000;
inline constexpr double kMelFminHz = 2000.0;
inline constexpr double kMelFmaxHz = 24000.0;
inline constexpr double kLogFloor = 1e-10;

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// 64 mel bins x 128 frames of log-energy, row-major (bin-major).
struct FilterbankFeature {
  std::vector<double> values = std::vector<double>(kMelBins * kFrames, 0.0);
  bool normalized = false;

  double& at(std::size_t bin, std::size_t frame) { return values[bin * kFrames + frame]; }
  double at(std::size_t bin, std::size_t frame) const { return values[bin * kFrames + frame]; }
};

struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t n_fft_bins = 0;
  double fmin_hz = kMelFminHz;
  double fmax_hz = kMelFmaxHz;
  Matrix weights;                    // n_mels x n_fft_bins
  std::vector<double> centers_hz;    // triangle peaks
  std::vector<std::size_t> first_bin;  // nonzero support [first_bin, last_bin)
  std::vector<std::size_t> last_bin;
};

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

std::vector<double> hamming_window(std::size_t n);

double mel_scale(double f_hz);
double mel_to_hz(double mel);

// Frequency of FFT bin k for a real frame of kFrameLength samples at 48 kHz.
inline double fft_bin_hz(std::size_t k) {
  return static_cast<double>(k) * kSampleRateHz / static_cast<double>(kFrameLength);
}

// |DFT|^2 of Hamming-windowed frames, kFftBins x kFrames. The clip is
// zero-padded at the tail to 48375 samples so that exactly 128 frames fit.
Matrix stft_power(const AudioClip& clip);

MelFilterbank build_mel_filterbank(std::size_t n_fft_bins = kFftBins, std::size_t n_mels = kMelBins,
                                   double fmin_hz = kMelFminHz, double fmax_hz = kMelFmaxHz);

// Shared immutable bank for the canonical geometry.
const MelFilterbank& default_filterbank();

FilterbankFeature log_mel(const AudioClip& clip);
FilterbankFeature log_mel(const AudioClip& clip, const MelFilterbank& bank);
FilterbankFeature apply_filterbank(const Matrix& power, const MelFilterbank& bank);

// Per-feature mean and sum of squared deviations, for streaming statistics.
struct FeatureMoments {
  double mean = 0.0;
  double m2 = 0.0;
};
FeatureMoments feature_moments(const FilterbankFeature& feature);

// Merges per-feature moments in index order (Chan et al.).
NormStats combine_moments(std::span<const FeatureMoments> moments);

// Global mean and population std over all entries of all features.
NormStats compute_stats(std::span<const FilterbankFeature> features);
FilterbankFeature normalize(const FilterbankFeature& feature, const NormStats& stats);

// Feature extraction over a batch of clips; parallel over clips.
std::vector<FilterbankFeature> extract_features(std::span<const AudioClip> clips);

}  // namespace manatee
