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

// Dense kernels for the transformer. Each kernel parallelizes its outer loop
// with OpenMP when the problem is large enough and the caller is not already
// inside a parallel region. Matching serial versions live in
// manatee/reference.hpp.

#include <cstddef>
#include <span>

namespace manatee::kernels {

// y[rows x out] = x[rows x in] * w[in x out] + b   (b may be empty)
template <typename T>
void linear(std::span<const T> x, std::span<const T> w, std::span<const T> b, std::span<T> y,
            std::size_t rows, std::size_t in, std::size_t out);

// Given dy for `linear`, accumulates dw (+= x^T dy) and db (+= column sums of
// dy) and overwrites dx (= dy w^T). dx may be empty when not needed.
template <typename T>
void linear_backward(std::span<const T> x, std::span<const T> w, std::span<const T> dy,
                     std::span<T> dx, std::span<T> dw, std::span<T> db, std::size_t rows,
                     std::size_t in, std::size_t out);

// Row-wise layer norm with affine (gain, bias). Stores mean and 1/std per row.
template <typename T>
void layer_norm(std::span<const T> x, std::span<const T> gain, std::span<const T> bias,
                std::span<T> y, std::span<T> mean, std::span<T> rstd, std::size_t rows,
                std::size_t dim, T eps);

// Overwrites dx; accumulates dgain and dbias.
template <typename T>
void layer_norm_backward(std::span<const T> x, std::span<const T> gain, std::span<const T> mean,
                         std::span<const T> rstd, std::span<const T> dy, std::span<T> dx,
                         std::span<T> dgain, std::span<T> dbias, std::size_t rows,
                         std::size_t dim);

// Exact (erf) GELU.
template <typename T>
void gelu(std::span<const T> x, std::span<T> y);

// dx = dy * gelu'(x)
template <typename T>
void gelu_backward(std::span<const T> x, std::span<const T> dy, std::span<T> dx);

// Scaled dot-product attention for one head; q, k, v, out are tokens x dim,
// probs is tokens x tokens (row-stochastic).
template <typename T>
void attention(std::span<const T> q, std::span<const T> k, std::span<const T> v,
               std::span<T> probs, std::span<T> out, std::size_t tokens, std::size_t dim);

// Overwrites dq, dk, dv. `scratch` needs tokens x tokens entries.
template <typename T>
void attention_backward(std::span<const T> q, std::span<const T> k, std::span<const T> v,
                        std::span<const T> probs, std::span<const T> dout, std::span<T> dq,
                        std::span<T> dk, std::span<T> dv, std::span<T> scratch,
                        std::size_t tokens, std::size_t dim);

}  // namespace manatee::kernels
