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

#include "manatee/reference.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "manatee/errors.hpp"

namespace manatee::reference {

Matrix stft_power(const AudioClip& clip) {
  if (clip.samples.size() != kClipSamples) {
    throw ShapeError("stft_power: expected 48000 samples, got " +
                     std::to_string(clip.samples.size()));
  }
  const auto window = hamming_window(kFrameLength);
  const double n = static_cast<double>(kFrameLength);
  Matrix power(kFftBins, kFrames);
  std::vector<double> frame(kFrameLength);
  for (std::size_t t = 0; t < kFrames; ++t) {
    for (std::size_t i = 0; i < kFrameLength; ++i) {
      const std::size_t idx = t * kHopLength + i;
      frame[i] = (idx < kClipSamples ? static_cast<double>(clip.samples[idx]) : 0.0) * window[i];
    }
    for (std::size_t k = 0; k < kFftBins; ++k) {
      double re = 0.0, im = 0.0;
      for (std::size_t i = 0; i < kFrameLength; ++i) {
        // reduce k*i modulo n first so the angle stays small and exact
        const double angle =
            2.0 * std::numbers::pi * static_cast<double>((k * i) % kFrameLength) / n;
        re += frame[i] * std::cos(angle);
        im -= frame[i] * std::sin(angle);
      }
      power(k, t) = re * re + im * im;
    }
  }
  return power;
}

std::vector<FilterbankFeature> extract_features(std::span<const AudioClip> clips) {
  std::vector<FilterbankFeature> out;
  out.reserve(clips.size());
  const auto bank = build_mel_filterbank();
  for (const auto& clip : clips) {
    out.push_back(apply_filterbank(reference::stft_power(clip), bank));
  }
  return out;
}

template <typename T>
void linear(std::span<const T> x, std::span<const T> w, std::span<const T> b, std::span<T> y,
            std::size_t rows, std::size_t in, std::size_t out) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < out; ++j) {
      T acc = b.empty() ? T(0) : b[j];
      for (std::size_t k = 0; k < in; ++k) acc += x[i * in + k] * w[k * out + j];
      y[i * out + j] = acc;
    }
  }
}

template <typename T>
void attention(std::span<const T> q, std::span<const T> k, std::span<const T> v,
               std::span<T> probs, std::span<T> out, std::size_t tokens, std::size_t dim) {
  const T scale = T(1) / std::sqrt(static_cast<T>(dim));
  for (std::size_t i = 0; i < tokens; ++i) {
    T row_max = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < tokens; ++j) {
      T s = 0;
      for (std::size_t c = 0; c < dim; ++c) s += q[i * dim + c] * k[j * dim + c];
      probs[i * tokens + j] = s * scale;
      if (probs[i * tokens + j] > row_max) row_max = probs[i * tokens + j];
    }
    T total = 0;
    for (std::size_t j = 0; j < tokens; ++j) {
      probs[i * tokens + j] = std::exp(probs[i * tokens + j] - row_max);
      total += probs[i * tokens + j];
    }
    for (std::size_t j = 0; j < tokens; ++j) probs[i * tokens + j] /= total;
    for (std::size_t c = 0; c < dim; ++c) {
      T acc = 0;
      for (std::size_t j = 0; j < tokens; ++j) acc += probs[i * tokens + j] * v[j * dim + c];
      out[i * dim + c] = acc;
    }
  }
}

template void linear<float>(std::span<const float>, std::span<const float>,
                            std::span<const float>, std::span<float>, std::size_t, std::size_t,
                            std::size_t);
template void linear<double>(std::span<const double>, std::span<const double>,
                             std::span<const double>, std::span<double>, std::size_t,
                             std::size_t, std::size_t);
template void attention<float>(std::span<const float>, std::span<const float>,
                               std::span<const float>, std::span<float>, std::span<float>,
                               std::size_t, std::size_t);
template void attention<double>(std::span<const double>, std::span<const double>,
                                std::span<const double>, std::span<double>, std::span<double>,
                                std::size_t, std::size_t);

}  // namespace manatee::reference
