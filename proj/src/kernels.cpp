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

#include "manatee/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace manatee::kernels {
namespace {

// Below this many multiply-adds a kernel stays serial.
constexpr std::size_t kParallelWork = std::size_t{1} << 18;

using Index = std::ptrdiff_t;

}  // namespace

template <typename T>
void linear(std::span<const T> x, std::span<const T> w, std::span<const T> b, std::span<T> y,
            std::size_t rows, std::size_t in, std::size_t out) {
  const T* xp = x.data();
  const T* wp = w.data();
  const T* bp = b.empty() ? nullptr : b.data();
  T* yp = y.data();
#pragma omp parallel for schedule(static) if (rows * in * out >= kParallelWork)
  for (Index i = 0; i < static_cast<Index>(rows); ++i) {
    T* yi = yp + static_cast<std::size_t>(i) * out;
    if (bp) {
      std::copy_n(bp, out, yi);
    } else {
      std::fill_n(yi, out, T(0));
    }
    const T* xi = xp + static_cast<std::size_t>(i) * in;
    for (std::size_t k = 0; k < in; ++k) {
      const T a = xi[k];
      const T* wk = wp + k * out;
      for (std::size_t j = 0; j < out; ++j) yi[j] += a * wk[j];
    }
  }
}

template <typename T>
void linear_backward(std::span<const T> x, std::span<const T> w, std::span<const T> dy,
                     std::span<T> dx, std::span<T> dw, std::span<T> db, std::size_t rows,
                     std::size_t in, std::size_t out) {
  const T* xp = x.data();
  const T* wp = w.data();
  const T* dyp = dy.data();
  const bool parallel = rows * in * out >= kParallelWork;

  if (!dx.empty()) {
    T* dxp = dx.data();
#pragma omp parallel for schedule(static) if (parallel)
    for (Index i = 0; i < static_cast<Index>(rows); ++i) {
      const T* dyi = dyp + static_cast<std::size_t>(i) * out;
      T* dxi = dxp + static_cast<std::size_t>(i) * in;
      for (std::size_t k = 0; k < in; ++k) {
        const T* wk = wp + k * out;
        T acc = 0;
#pragma omp simd reduction(+ : acc)
        for (std::size_t j = 0; j < out; ++j) acc += dyi[j] * wk[j];
        dxi[k] = acc;
      }
    }
  }

  T* dwp = dw.data();
#pragma omp parallel for schedule(static) if (parallel)
  for (Index k = 0; k < static_cast<Index>(in); ++k) {
    T* dwk = dwp + static_cast<std::size_t>(k) * out;
    for (std::size_t i = 0; i < rows; ++i) {
      const T a = xp[i * in + static_cast<std::size_t>(k)];
      if (a == T(0)) continue;
      const T* dyi = dyp + i * out;
      for (std::size_t j = 0; j < out; ++j) dwk[j] += a * dyi[j];
    }
  }

  if (!db.empty()) {
    T* dbp = db.data();
    for (std::size_t i = 0; i < rows; ++i) {
      const T* dyi = dyp + i * out;
      for (std::size_t j = 0; j < out; ++j) dbp[j] += dyi[j];
    }
  }
}

template <typename T>
void layer_norm(std::span<const T> x, std::span<const T> gain, std::span<const T> bias,
                std::span<T> y, std::span<T> mean, std::span<T> rstd, std::size_t rows,
                std::size_t dim, T eps) {
  for (std::size_t i = 0; i < rows; ++i) {
    const T* xi = x.data() + i * dim;
    T* yi = y.data() + i * dim;
    T m = 0;
    for (std::size_t j = 0; j < dim; ++j) m += xi[j];
    m /= static_cast<T>(dim);
    T var = 0;
    for (std::size_t j = 0; j < dim; ++j) var += (xi[j] - m) * (xi[j] - m);
    var /= static_cast<T>(dim);
    const T r = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < dim; ++j) yi[j] = (xi[j] - m) * r * gain[j] + bias[j];
    mean[i] = m;
    rstd[i] = r;
  }
}

template <typename T>
void layer_norm_backward(std::span<const T> x, std::span<const T> gain, std::span<const T> mean,
                         std::span<const T> rstd, std::span<const T> dy, std::span<T> dx,
                         std::span<T> dgain, std::span<T> dbias, std::size_t rows,
                         std::size_t dim) {
  const T inv_dim = T(1) / static_cast<T>(dim);
  for (std::size_t i = 0; i < rows; ++i) {
    const T* xi = x.data() + i * dim;
    const T* dyi = dy.data() + i * dim;
    T* dxi = dx.data() + i * dim;
    const T m = mean[i];
    const T r = rstd[i];
    T sum_dxhat = 0, sum_dxhat_xhat = 0;
    for (std::size_t j = 0; j < dim; ++j) {
      const T xhat = (xi[j] - m) * r;
      const T dxhat = dyi[j] * gain[j];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
      dgain[j] += dyi[j] * xhat;
      dbias[j] += dyi[j];
    }
    sum_dxhat *= inv_dim;
    sum_dxhat_xhat *= inv_dim;
    for (std::size_t j = 0; j < dim; ++j) {
      const T xhat = (xi[j] - m) * r;
      dxi[j] = r * (dyi[j] * gain[j] - sum_dxhat - xhat * sum_dxhat_xhat);
    }
  }
}

template <typename T>
void gelu(std::span<const T> x, std::span<T> y) {
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] * inv_sqrt2));
  }
}

template <typename T>
void gelu_backward(std::span<const T> x, std::span<const T> dy, std::span<T> dx) {
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  const T inv_sqrt_2pi = static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T cdf = T(0.5) * (T(1) + std::erf(x[i] * inv_sqrt2));
    const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x[i] * x[i]);
    dx[i] = dy[i] * (cdf + x[i] * pdf);
  }
}

template <typename T>
void attention(std::span<const T> q, std::span<const T> k, std::span<const T> v,
               std::span<T> probs, std::span<T> out, std::size_t tokens, std::size_t dim) {
  const T scale = T(1) / std::sqrt(static_cast<T>(dim));
#pragma omp parallel for schedule(static) if (tokens * tokens * dim >= kParallelWork)
  for (Index ii = 0; ii < static_cast<Index>(tokens); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const T* qi = q.data() + i * dim;
    T* pi = probs.data() + i * tokens;
    T row_max = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < tokens; ++j) {
      const T* kj = k.data() + j * dim;
      T s = 0;
#pragma omp simd reduction(+ : s)
      for (std::size_t c = 0; c < dim; ++c) s += qi[c] * kj[c];
      s *= scale;
      pi[j] = s;
      row_max = std::max(row_max, s);
    }
    T total = 0;
    for (std::size_t j = 0; j < tokens; ++j) {
      pi[j] = std::exp(pi[j] - row_max);
      total += pi[j];
    }
    const T inv = T(1) / total;
    T* oi = out.data() + i * dim;
    std::fill_n(oi, dim, T(0));
    for (std::size_t j = 0; j < tokens; ++j) {
      pi[j] *= inv;
      const T p = pi[j];
      const T* vj = v.data() + j * dim;
      for (std::size_t c = 0; c < dim; ++c) oi[c] += p * vj[c];
    }
  }
}

template <typename T>
void attention_backward(std::span<const T> q, std::span<const T> k, std::span<const T> v,
                        std::span<const T> probs, std::span<const T> dout, std::span<T> dq,
                        std::span<T> dk, std::span<T> dv, std::span<T> scratch,
                        std::size_t tokens, std::size_t dim) {
  const T scale = T(1) / std::sqrt(static_cast<T>(dim));
  T* ds = scratch.data();
  // dscores, row by row
  for (std::size_t i = 0; i < tokens; ++i) {
    const T* doi = dout.data() + i * dim;
    const T* pi = probs.data() + i * tokens;
    T* dsi = ds + i * tokens;
    T dot = 0;
    for (std::size_t j = 0; j < tokens; ++j) {
      const T* vj = v.data() + j * dim;
      T dp = 0;
#pragma omp simd reduction(+ : dp)
      for (std::size_t c = 0; c < dim; ++c) dp += doi[c] * vj[c];
      dsi[j] = dp;
      dot += pi[j] * dp;
    }
    for (std::size_t j = 0; j < tokens; ++j) dsi[j] = pi[j] * (dsi[j] - dot) * scale;
  }
  std::fill(dq.begin(), dq.end(), T(0));
  std::fill(dk.begin(), dk.end(), T(0));
  std::fill(dv.begin(), dv.end(), T(0));
  for (std::size_t i = 0; i < tokens; ++i) {
    const T* dsi = ds + i * tokens;
    const T* pi = probs.data() + i * tokens;
    const T* qi = q.data() + i * dim;
    const T* doi = dout.data() + i * dim;
    T* dqi = dq.data() + i * dim;
    for (std::size_t j = 0; j < tokens; ++j) {
      const T* kj = k.data() + j * dim;
      T* dkj = dk.data() + j * dim;
      T* dvj = dv.data() + j * dim;
      const T s = dsi[j];
      const T p = pi[j];
      for (std::size_t c = 0; c < dim; ++c) {
        dqi[c] += s * kj[c];
        dkj[c] += s * qi[c];
        dvj[c] += p * doi[c];
      }
    }
  }
}

#define MANATEE_INSTANTIATE(T)                                                                   \
  template void linear<T>(std::span<const T>, std::span<const T>, std::span<const T>,            \
                          std::span<T>, std::size_t, std::size_t, std::size_t);                  \
  template void linear_backward<T>(std::span<const T>, std::span<const T>, std::span<const T>,   \
                                   std::span<T>, std::span<T>, std::span<T>, std::size_t,        \
                                   std::size_t, std::size_t);                                    \
  template void layer_norm<T>(std::span<const T>, std::span<const T>, std::span<const T>,        \
                              std::span<T>, std::span<T>, std::span<T>, std::size_t,             \
                              std::size_t, T);                                                   \
  template void layer_norm_backward<T>(std::span<const T>, std::span<const T>,                   \
                                       std::span<const T>, std::span<const T>,                   \
                                       std::span<const T>, std::span<T>, std::span<T>,           \
                                       std::span<T>, std::size_t, std::size_t);                  \
  template void gelu<T>(std::span<const T>, std::span<T>);                                       \
  template void gelu_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);          \
  template void attention<T>(std::span<const T>, std::span<const T>, std::span<const T>,         \
                             std::span<T>, std::span<T>, std::size_t, std::size_t);              \
  template void attention_backward<T>(std::span<const T>, std::span<const T>,                    \
                                      std::span<const T>, std::span<const T>,                    \
                                      std::span<const T>, std::span<T>, std::span<T>,            \
                                      std::span<T>, std::span<T>, std::size_t, std::size_t);

MANATEE_INSTANTIATE(float)
MANATEE_INSTANTIATE(double)

#undef MANATEE_INSTANTIATE

}  // namespace manatee::kernels
