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

// Serial, unoptimized implementations kept as oracles for the parallel
// kernels. Nothing on the training path calls into this namespace.

#include <cstddef>
#include <span>
#include <vector>

#include "manatee/dsp.hpp"

namespace manatee::reference {

// O(N^2) direct DFT of each Hamming-windowed frame.
Matrix stft_power(const AudioClip& clip);

std::vector<FilterbankFeature> extract_features(std::span<const AudioClip> clips);

// y[rows x out] = x[rows x in] * w[in x out] + b[out]  (b may be empty)
template <typename T>
void linear(std::span<const T> x, std::span<const T> w, std::span<const T> b, std::span<T> y,
            std::size_t rows, std::size_t in, std::size_t out);

// Single-head scaled dot-product attention over `tokens` rows of width
// `dim`. probs is tokens x tokens, out is tokens x dim.
template <typename T>
void attention(std::span<const T> q, std::span<const T> k, std::span<const T> v,
               std::span<T> probs, std::span<T> out, std::size_t tokens, std::size_t dim);

}  // namespace manatee::reference
