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

#include "manatee/dsp.hpp"

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "manatee/errors.hpp"

namespace manatee {
namespace {

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

// One r2c plan for the frame length, created once and shared. The new-array
// execute call is thread-safe as long as the buffers have the alignment of
// the planning buffers, which fftw_alloc_* guarantees.
class FramePlan {
 public:
  static const FramePlan& instance() {
    static const FramePlan plan;
    return plan;
  }
  void execute(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(plan_, in, out); }

 private:
  FramePlan() {
    std::unique_ptr<double, FftwFree> in(fftw_alloc_real(kFrameLength));
    std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(kFftBins));
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(kFrameLength), in.get(), out.get(),
                                 FFTW_ESTIMATE);
  }
  ~FramePlan() { fftw_destroy_plan(plan_); }
  fftw_plan plan_;
};

}  // namespace

std::vector<double> hamming_window(std::size_t n) {
  if (n < 2) throw ArgumentError("hamming_window: n must be at least 2");
  std::vector<double> w(n);
  const double denom = static_cast<double>(n - 1);
  for (std::size_t k = 0; k < n; ++k) {
    w[k] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / denom);
  }
  return w;
}

double mel_scale(double f_hz) {
  if (!(f_hz >= 0.0)) throw ArgumentError("mel_scale: frequency must be non-negative");
  return 2595.0 * std::log10(1.0 + f_hz / 700.0);
}

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix stft_power(const AudioClip& clip) {
  if (clip.samples.size() != kClipSamples) {
    throw ShapeError("stft_power: expected " + std::to_string(kClipSamples) + " samples, got " +
                     std::to_string(clip.samples.size()));
  }
  if (clip.sample_rate_hz != kSampleRateHz) throw RateError(clip.sample_rate_hz);

  static const std::vector<double> window = hamming_window(kFrameLength);
  const auto& plan = FramePlan::instance();
  std::unique_ptr<double, FftwFree> frame(fftw_alloc_real(kFrameLength));
  std::unique_ptr<fftw_complex, FftwFree> spectrum(fftw_alloc_complex(kFftBins));

  Matrix power(kFftBins, kFrames);
  for (std::size_t t = 0; t < kFrames; ++t) {
    const std::size_t offset = t * kHopLength;
    for (std::size_t i = 0; i < kFrameLength; ++i) {
      const std::size_t idx = offset + i;
      const double s = idx < kClipSamples ? static_cast<double>(clip.samples[idx]) : 0.0;
      frame.get()[i] = s * window[i];
    }
    plan.execute(frame.get(), spectrum.get());
    for (std::size_t k = 0; k < kFftBins; ++k) {
      const double re = spectrum.get()[k][0];
      const double im = spectrum.get()[k][1];
      power(k, t) = re * re + im * im;
    }
  }
  return power;
}

MelFilterbank build_mel_filterbank(std::size_t n_fft_bins, std::size_t n_mels, double fmin_hz,
                                   double fmax_hz) {
  const double nyquist = kSampleRateHz / 2.0;
  if (n_fft_bins < 2 || n_mels == 0) throw ArgumentError("build_mel_filterbank: empty geometry");
  if (!(fmin_hz >= 0.0 && fmin_hz < fmax_hz)) {
    throw ArgumentError("build_mel_filterbank: need 0 <= fmin < fmax");
  }
  if (fmax_hz > nyquist) {
    throw ArgumentError("build_mel_filterbank: fmax " + std::to_string(fmax_hz) +
                        " Hz exceeds Nyquist " + std::to_string(nyquist) + " Hz");
  }

  MelFilterbank bank;
  bank.n_mels = n_mels;
  bank.n_fft_bins = n_fft_bins;
  bank.fmin_hz = fmin_hz;
  bank.fmax_hz = fmax_hz;
  bank.weights = Matrix(n_mels, n_fft_bins);

  const double mel_lo = mel_scale(fmin_hz);
  const double mel_hi = mel_scale(fmax_hz);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(n_mels + 1));
  }
  edges.front() = fmin_hz;
  edges.back() = fmax_hz;

  const double bin_hz = nyquist / static_cast<double>(n_fft_bins - 1);
  bank.centers_hz.resize(n_mels);
  bank.first_bin.assign(n_mels, n_fft_bins);
  bank.last_bin.assign(n_mels, 0);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    bank.centers_hz[m] = mid;
    for (std::size_t k = 0; k < n_fft_bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      if (w > 0.0) {
        bank.weights(m, k) = w;
        bank.first_bin[m] = std::min(bank.first_bin[m], k);
        bank.last_bin[m] = std::max(bank.last_bin[m], k + 1);
      }
    }
    if (bank.first_bin[m] >= bank.last_bin[m]) {
      throw ArgumentError("build_mel_filterbank: filter " + std::to_string(m) +
                          " covers no FFT bin; too many mel bins for this resolution");
    }
  }
  return bank;
}

const MelFilterbank& default_filterbank() {
  static const MelFilterbank bank = build_mel_filterbank();
  return bank;
}

FilterbankFeature apply_filterbank(const Matrix& power, const MelFilterbank& bank) {
  if (power.rows != bank.n_fft_bins || power.cols != kFrames || bank.n_mels != kMelBins) {
    throw ShapeError("apply_filterbank: power/filterbank geometry mismatch");
  }
  FilterbankFeature out;
  for (std::size_t m = 0; m < bank.n_mels; ++m) {
    for (std::size_t t = 0; t < kFrames; ++t) {
      double e = 0.0;
      for (std::size_t k = bank.first_bin[m]; k < bank.last_bin[m]; ++k) {
        e += bank.weights(m, k) * power(k, t);
      }
      out.at(m, t) = std::log(e + kLogFloor);
    }
  }
  out.normalized = false;
  return out;
}

FilterbankFeature log_mel(const AudioClip& clip, const MelFilterbank& bank) {
  return apply_filterbank(stft_power(clip), bank);
}

FilterbankFeature log_mel(const AudioClip& clip) { return log_mel(clip, default_filterbank()); }

FeatureMoments feature_moments(const FilterbankFeature& feature) {
  const auto& v = feature.values;
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  double m2 = 0.0;
  for (double x : v) m2 += (x - mean) * (x - mean);
  return {mean, m2};
}

NormStats combine_moments(std::span<const FeatureMoments> moments) {
  if (moments.empty()) throw ArgumentError("compute_stats: empty feature collection");
  const double per = static_cast<double>(kMelBins * kFrames);
  double count = 0.0, mean = 0.0, m2 = 0.0;
  for (const auto& fm : moments) {
    const double total = count + per;
    const double delta = fm.mean - mean;
    mean += delta * per / total;
    m2 += fm.m2 + delta * delta * count * per / total;
    count = total;
  }
  const double var = m2 / count;
  if (!(var > 0.0)) throw DegenerateDataError("compute_stats: features have zero variance");
  return NormStats{mean, std::sqrt(var)};
}

NormStats compute_stats(std::span<const FilterbankFeature> features) {
  if (features.empty()) throw ArgumentError("compute_stats: empty feature collection");
  std::vector<FeatureMoments> moments(features.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(features.size()); ++i) {
    moments[static_cast<std::size_t>(i)] = feature_moments(features[static_cast<std::size_t>(i)]);
  }
  return combine_moments(moments);
}

FilterbankFeature normalize(const FilterbankFeature& feature, const NormStats& stats) {
  if (feature.normalized) throw StateError("normalize: feature is already normalized");
  if (!(stats.std > 0.0)) throw ArgumentError("normalize: std must be positive");
  FilterbankFeature out;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = (feature.values[i] - stats.mean) / stats.std;
  }
  out.normalized = true;
  return out;
}

std::vector<FilterbankFeature> extract_features(std::span<const AudioClip> clips) {
  for (const auto& c : clips) {
    if (c.samples.size() != kClipSamples) {
      throw ShapeError("extract_features: clip of " + std::to_string(c.samples.size()) +
                       " samples");
    }
    if (c.sample_rate_hz != kSampleRateHz) throw RateError(c.sample_rate_hz);
  }
  std::vector<FilterbankFeature> out(clips.size());
  const auto& bank = default_filterbank();
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(clips.size()); ++i) {
    out[static_cast<std::size_t>(i)] = log_mel(clips[static_cast<std::size_t>(i)], bank);
  }
  return out;
}

}  // namespace manatee
