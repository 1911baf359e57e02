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

#include "manatee/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "manatee/errors.hpp"
#include "manatee/kernels.hpp"
#include "manatee/util.hpp"

namespace manatee {
namespace {

constexpr double kLayerNormEps = 1e-6;
constexpr double kInitStd = 0.02;
constexpr char kCheckpointMagic[8] = {'M', 'N', 'T', 'E', 'C', 'K', 'P', 'T'};

template <typename T>
std::span<T> slice(std::vector<T>& v, std::size_t offset, std::size_t n) {
  return std::span<T>(v).subspan(offset, n);
}

template <typename T>
std::span<const T> cslice(const std::vector<T>& v, std::size_t offset, std::size_t n) {
  return std::span<const T>(v).subspan(offset, n);
}

template <typename T>
void check_finite(std::span<const T> values, const std::string& where) {
  for (T v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite activation in " + where);
  }
}

double stable_sigmoid(double z) {
  double s;
  if (z >= 0) {
    s = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    s = e / (1.0 + e);
  }
  // keep the score strictly inside (0, 1) even when exp saturates
  return std::clamp(s, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"input_bins", c.input_bins},     {"input_frames", c.input_frames},
          {"patch_bins", c.patch_bins},     {"patch_frames", c.patch_frames},
          {"stride_bins", c.stride_bins},   {"stride_frames", c.stride_frames},
          {"embed_dim", c.embed_dim},       {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},           {"mlp_ratio", c.mlp_ratio}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_bins = j.at("input_bins").get<std::size_t>();
  c.input_frames = j.at("input_frames").get<std::size_t>();
  c.patch_bins = j.at("patch_bins").get<std::size_t>();
  c.patch_frames = j.at("patch_frames").get<std::size_t>();
  c.stride_bins = j.at("stride_bins").get<std::size_t>();
  c.stride_frames = j.at("stride_frames").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
  return c;
}

}  // namespace

ModelConfig ModelConfig::base() {
  ModelConfig c;
  c.embed_dim = 768;
  c.n_layers = 12;
  c.n_heads = 12;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.embed_dim = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  return c;
}

void ModelConfig::validate() const {
  if (patch_bins == 0 || patch_frames == 0 || stride_bins == 0 || stride_frames == 0) {
    throw ArgumentError("model config: patch and stride sizes must be positive");
  }
  if (patch_bins > input_bins || patch_frames > input_frames) {
    throw ArgumentError("model config: patch larger than input");
  }
  if (embed_dim == 0 || n_heads == 0 || n_layers == 0 || mlp_ratio == 0) {
    throw ArgumentError("model config: embed_dim, n_heads, n_layers, mlp_ratio must be positive");
  }
  if (embed_dim % n_heads != 0) {
    throw ArgumentError("model config: embed_dim " + std::to_string(embed_dim) +
                        " is not divisible by n_heads " + std::to_string(n_heads));
  }
}

std::size_t patch_count(std::size_t height, std::size_t width, std::size_t patch_h,
                        std::size_t patch_w, std::size_t stride_h, std::size_t stride_w) {
  if (patch_h == 0 || patch_w == 0 || stride_h == 0 || stride_w == 0) {
    throw ArgumentError("patch_count: zero patch or stride");
  }
  if (patch_h > height || patch_w > width) return 0;
  return ((height - patch_h) / stride_h + 1) * ((width - patch_w) / stride_w + 1);
}

ParameterLayout::ParameterLayout(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.embed_dim, m = c.mlp_dim();
  auto add = [this](std::string name, std::vector<std::size_t> shape) {
    std::size_t size = 1;
    for (auto s : shape) size *= s;
    tensors.push_back({std::move(name), std::move(shape), total, size});
    total += size;
    return tensors.back().offset;
  };
  patch_w = add("patch.w", {c.patch_dim(), d});
  patch_b = add("patch.b", {d});
  cls = add("cls", {d});
  pos = add("pos", {c.tokens(), d});
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerOffsets o{};
    o.ln1_gain = add(p + "ln1.gain", {d});
    o.ln1_bias = add(p + "ln1.bias", {d});
    o.qkv_w = add(p + "attn.qkv.w", {d, 3 * d});
    o.qkv_b = add(p + "attn.qkv.b", {3 * d});
    o.proj_w = add(p + "attn.proj.w", {d, d});
    o.proj_b = add(p + "attn.proj.b", {d});
    o.ln2_gain = add(p + "ln2.gain", {d});
    o.ln2_bias = add(p + "ln2.bias", {d});
    o.fc1_w = add(p + "mlp.fc1.w", {d, m});
    o.fc1_b = add(p + "mlp.fc1.b", {m});
    o.fc2_w = add(p + "mlp.fc2.w", {m, d});
    o.fc2_b = add(p + "mlp.fc2.b", {d});
    layers.push_back(o);
  }
  final_gain = add("final.gain", {d});
  final_bias = add("final.bias", {d});
  head_w = add("head.w", {d});
  head_b = add("head.b", {1});
}

const TensorInfo& ParameterLayout::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw ArgumentError("unknown parameter tensor '" + name + "'");
}

std::size_t parameter_count(const ModelConfig& config) { return ParameterLayout(config).total; }

std::vector<std::vector<double>> patchify(const FilterbankFeature& feature,
                                          const ModelConfig& c) {
  if (!feature.normalized) throw StateError("patchify: feature is not normalized");
  if (c.input_bins != kMelBins || c.input_frames != kFrames) {
    throw ShapeError("patchify: model input shape does not match the (64,128) feature");
  }
  std::vector<std::vector<double>> patches;
  patches.reserve(c.num_patches());
  for (std::size_t pf = 0; pf < c.grid_bins(); ++pf) {
    for (std::size_t pt = 0; pt < c.grid_frames(); ++pt) {
      std::vector<double> v;
      v.reserve(c.patch_dim());
      for (std::size_t i = 0; i < c.patch_bins; ++i) {
        for (std::size_t j = 0; j < c.patch_frames; ++j) {
          v.push_back(feature.at(pf * c.stride_bins + i, pt * c.stride_frames + j));
        }
      }
      patches.push_back(std::move(v));
    }
  }
  return patches;
}

template <typename T>
Workspace<T>::Workspace(const ModelConfig& c) {
  const std::size_t s = c.tokens(), d = c.embed_dim, m = c.mlp_dim(), dh = c.head_dim();
  patches.assign(c.num_patches() * c.patch_dim(), T(0));
  tokens.assign(s * d, T(0));
  layers.resize(c.n_layers);
  for (auto& L : layers) {
    L.input.assign(s * d, T(0));
    L.ln1.assign(s * d, T(0));
    L.ln1_mean.assign(s, T(0));
    L.ln1_rstd.assign(s, T(0));
    L.qkv.assign(s * 3 * d, T(0));
    L.probs.assign(c.n_heads * s * s, T(0));
    L.attn.assign(s * d, T(0));
    L.mid.assign(s * d, T(0));
    L.ln2.assign(s * d, T(0));
    L.ln2_mean.assign(s, T(0));
    L.ln2_rstd.assign(s, T(0));
    L.hidden.assign(s * m, T(0));
    L.activated.assign(s * m, T(0));
  }
  output.assign(s * d, T(0));
  cls_norm.assign(d, T(0));
  residual.assign(s * d, T(0));
  dstream.assign(s * d, T(0));
  dbuf.assign(s * d, T(0));
  dnorm.assign(s * d, T(0));
  dattn.assign(s * d, T(0));
  dact.assign(s * m, T(0));
  dhidden.assign(s * m, T(0));
  dqkv.assign(s * 3 * d, T(0));
  dcls.assign(d, T(0));
  for (auto* v : {&head_q, &head_k, &head_v, &head_out, &head_dq, &head_dk, &head_dv, &head_dout}) {
    v->assign(s * dh, T(0));
  }
  dscores.assign(s * s, T(0));
}

template <typename T>
Model<T>::Model(const ModelConfig& config)
    : config_(config), layout_(config), params_(layout_.total, T(0)) {
  for (const auto& t : layout_.tensors) {
    if (t.name.ends_with(".gain")) std::fill_n(params_.begin() + t.offset, t.size, T(1));
  }
}

template <typename T>
void Model<T>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0x696e6974 /* "init" */));
  std::normal_distribution<double> normal(0.0, kInitStd);
  for (const auto& t : layout_.tensors) {
    auto dst = slice(params_, t.offset, t.size);
    const bool random = t.name.ends_with(".w") || t.name == "cls" || t.name == "pos";
    if (random) {
      for (auto& p : dst) {
        double x;
        do {
          x = normal(rng);
        } while (std::abs(x) > 2.0 * kInitStd);
        p = static_cast<T>(x);
      }
    } else if (t.name.ends_with(".gain")) {
      std::fill(dst.begin(), dst.end(), T(1));
    } else {
      std::fill(dst.begin(), dst.end(), T(0));
    }
  }
}

template <typename T>
std::span<T> Model<T>::tensor(const std::string& name) {
  const auto& t = layout_.tensor(name);
  return slice(params_, t.offset, t.size);
}

template <typename T>
std::span<const T> Model<T>::tensor(const std::string& name) const {
  const auto& t = layout_.tensor(name);
  return cslice(params_, t.offset, t.size);
}

template <typename T>
void Model<T>::load_input(const FilterbankFeature& feature, Workspace<T>& ws) const {
  if (!feature.normalized) throw StateError("model input: feature is not normalized");
  const auto& c = config_;
  if (c.input_bins != kMelBins || c.input_frames != kFrames) {
    throw ShapeError("model input shape does not match the (64,128) feature");
  }
  std::size_t idx = 0;
  for (std::size_t pf = 0; pf < c.grid_bins(); ++pf) {
    for (std::size_t pt = 0; pt < c.grid_frames(); ++pt) {
      for (std::size_t i = 0; i < c.patch_bins; ++i) {
        const double* row = feature.values.data() + (pf * c.stride_bins + i) * kFrames +
                            pt * c.stride_frames;
        for (std::size_t j = 0; j < c.patch_frames; ++j) ws.patches[idx++] = static_cast<T>(row[j]);
      }
    }
  }
}

template <typename T>
double Model<T>::forward(Workspace<T>& ws) const {
  const auto& c = config_;
  const auto& lo = layout_;
  const std::size_t s = c.tokens(), n = c.num_patches(), d = c.embed_dim, m = c.mlp_dim();
  const std::size_t h = c.n_heads, dh = c.head_dim(), kp = c.patch_dim();
  const auto& p = params_;

  // Patch embedding, classification token, positions.
  for (std::size_t j = 0; j < d; ++j) ws.tokens[j] = p[lo.cls + j];
  kernels::linear<T>(ws.patches, cslice(p, lo.patch_w, kp * d), cslice(p, lo.patch_b, d),
                     slice(ws.tokens, d, n * d), n, kp, d);
  for (std::size_t i = 0; i < s * d; ++i) ws.tokens[i] += p[lo.pos + i];
  check_finite<T>(ws.tokens, "patch embedding");

  const std::vector<T>* x = &ws.tokens;
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    auto& L = ws.layers[l];
    const auto& o = lo.layers[l];
    L.input = *x;

    kernels::layer_norm<T>(L.input, cslice(p, o.ln1_gain, d), cslice(p, o.ln1_bias, d), L.ln1,
                           L.ln1_mean, L.ln1_rstd, s, d, static_cast<T>(kLayerNormEps));
    kernels::linear<T>(L.ln1, cslice(p, o.qkv_w, d * 3 * d), cslice(p, o.qkv_b, 3 * d), L.qkv, s,
                       d, 3 * d);
    for (std::size_t hh = 0; hh < h; ++hh) {
      for (std::size_t i = 0; i < s; ++i) {
        const T* row = L.qkv.data() + i * 3 * d + hh * dh;
        std::copy_n(row, dh, ws.head_q.data() + i * dh);
        std::copy_n(row + d, dh, ws.head_k.data() + i * dh);
        std::copy_n(row + 2 * d, dh, ws.head_v.data() + i * dh);
      }
      kernels::attention<T>(ws.head_q, ws.head_k, ws.head_v, slice(L.probs, hh * s * s, s * s),
                            ws.head_out, s, dh);
      for (std::size_t i = 0; i < s; ++i) {
        std::copy_n(ws.head_out.data() + i * dh, dh, L.attn.data() + i * d + hh * dh);
      }
    }
    kernels::linear<T>(L.attn, cslice(p, o.proj_w, d * d), cslice(p, o.proj_b, d), ws.residual,
                       s, d, d);
    for (std::size_t i = 0; i < s * d; ++i) L.mid[i] = L.input[i] + ws.residual[i];
    check_finite<T>(L.mid, "layer " + std::to_string(l) + " attention");

    kernels::layer_norm<T>(L.mid, cslice(p, o.ln2_gain, d), cslice(p, o.ln2_bias, d), L.ln2,
                           L.ln2_mean, L.ln2_rstd, s, d, static_cast<T>(kLayerNormEps));
    kernels::linear<T>(L.ln2, cslice(p, o.fc1_w, d * m), cslice(p, o.fc1_b, m), L.hidden, s, d,
                       m);
    kernels::gelu<T>(L.hidden, L.activated);
    kernels::linear<T>(L.activated, cslice(p, o.fc2_w, m * d), cslice(p, o.fc2_b, d),
                       ws.residual, s, m, d);
    for (std::size_t i = 0; i < s * d; ++i) ws.output[i] = L.mid[i] + ws.residual[i];
    check_finite<T>(ws.output, "layer " + std::to_string(l) + " mlp");
    x = &ws.output;
  }
  if (c.n_layers == 0) ws.output = ws.tokens;

  // Final norm and head on the classification token only.
  T mean[1], rstd[1];
  kernels::layer_norm<T>(cslice(ws.output, 0, d), cslice(p, lo.final_gain, d),
                         cslice(p, lo.final_bias, d), ws.cls_norm, mean, rstd, 1, d,
                         static_cast<T>(kLayerNormEps));
  ws.cls_mean = mean[0];
  ws.cls_rstd = rstd[0];
  double logit = static_cast<double>(p[lo.head_b]);
  for (std::size_t j = 0; j < d; ++j) {
    logit += static_cast<double>(ws.cls_norm[j]) * static_cast<double>(p[lo.head_w + j]);
  }
  if (!std::isfinite(logit)) throw NumericError("non-finite activation in classification head");
  ws.logit = logit;
  ws.score = stable_sigmoid(logit);
  return ws.score;
}

template <typename T>
void Model<T>::backward(Workspace<T>& ws, double dlogit_d, std::span<T> grad) const {
  const auto& c = config_;
  const auto& lo = layout_;
  const std::size_t s = c.tokens(), n = c.num_patches(), d = c.embed_dim, m = c.mlp_dim();
  const std::size_t h = c.n_heads, dh = c.head_dim(), kp = c.patch_dim();
  const auto& p = params_;
  const T dlogit = static_cast<T>(dlogit_d);
  auto g = [&](std::size_t offset, std::size_t size) { return grad.subspan(offset, size); };

  // Head.
  grad[lo.head_b] += dlogit;
  for (std::size_t j = 0; j < d; ++j) {
    grad[lo.head_w + j] += dlogit * ws.cls_norm[j];
    ws.dcls[j] = dlogit * p[lo.head_w + j];
  }
  std::fill(ws.dstream.begin(), ws.dstream.end(), T(0));
  const T mean[1] = {ws.cls_mean};
  const T rstd[1] = {ws.cls_rstd};
  kernels::layer_norm_backward<T>(cslice(ws.output, 0, d), cslice(p, lo.final_gain, d), mean,
                                  rstd, ws.dcls, slice(ws.dstream, 0, d), g(lo.final_gain, d),
                                  g(lo.final_bias, d), 1, d);

  for (std::size_t li = c.n_layers; li-- > 0;) {
    auto& L = ws.layers[li];
    const auto& o = lo.layers[li];

    // MLP branch: out = mid + fc2(gelu(fc1(ln2(mid))))
    kernels::linear_backward<T>(L.activated, cslice(p, o.fc2_w, m * d), ws.dstream, ws.dact,
                                g(o.fc2_w, m * d), g(o.fc2_b, d), s, m, d);
    kernels::gelu_backward<T>(L.hidden, ws.dact, ws.dhidden);
    kernels::linear_backward<T>(L.ln2, cslice(p, o.fc1_w, d * m), ws.dhidden, ws.dbuf,
                                g(o.fc1_w, d * m), g(o.fc1_b, m), s, d, m);
    kernels::layer_norm_backward<T>(L.mid, cslice(p, o.ln2_gain, d), L.ln2_mean, L.ln2_rstd,
                                    ws.dbuf, ws.dnorm, g(o.ln2_gain, d), g(o.ln2_bias, d), s, d);
    for (std::size_t i = 0; i < s * d; ++i) ws.dstream[i] += ws.dnorm[i];

    // Attention branch: mid = input + proj(attn(ln1(input)))
    kernels::linear_backward<T>(L.attn, cslice(p, o.proj_w, d * d), ws.dstream, ws.dattn,
                                g(o.proj_w, d * d), g(o.proj_b, d), s, d, d);
    for (std::size_t hh = 0; hh < h; ++hh) {
      for (std::size_t i = 0; i < s; ++i) {
        const T* row = L.qkv.data() + i * 3 * d + hh * dh;
        std::copy_n(row, dh, ws.head_q.data() + i * dh);
        std::copy_n(row + d, dh, ws.head_k.data() + i * dh);
        std::copy_n(row + 2 * d, dh, ws.head_v.data() + i * dh);
        std::copy_n(ws.dattn.data() + i * d + hh * dh, dh, ws.head_dout.data() + i * dh);
      }
      kernels::attention_backward<T>(ws.head_q, ws.head_k, ws.head_v,
                                     cslice(L.probs, hh * s * s, s * s), ws.head_dout, ws.head_dq,
                                     ws.head_dk, ws.head_dv, ws.dscores, s, dh);
      for (std::size_t i = 0; i < s; ++i) {
        T* row = ws.dqkv.data() + i * 3 * d + hh * dh;
        std::copy_n(ws.head_dq.data() + i * dh, dh, row);
        std::copy_n(ws.head_dk.data() + i * dh, dh, row + d);
        std::copy_n(ws.head_dv.data() + i * dh, dh, row + 2 * d);
      }
    }
    kernels::linear_backward<T>(L.ln1, cslice(p, o.qkv_w, d * 3 * d), ws.dqkv, ws.dbuf,
                                g(o.qkv_w, d * 3 * d), g(o.qkv_b, 3 * d), s, d, 3 * d);
    kernels::layer_norm_backward<T>(L.input, cslice(p, o.ln1_gain, d), L.ln1_mean, L.ln1_rstd,
                                    ws.dbuf, ws.dnorm, g(o.ln1_gain, d), g(o.ln1_bias, d), s, d);
    for (std::size_t i = 0; i < s * d; ++i) ws.dstream[i] += ws.dnorm[i];
  }

  // Embedding.
  for (std::size_t j = 0; j < d; ++j) grad[lo.cls + j] += ws.dstream[j];
  for (std::size_t i = 0; i < s * d; ++i) grad[lo.pos + i] += ws.dstream[i];
  kernels::linear_backward<T>(ws.patches, cslice(p, lo.patch_w, kp * d),
                              cslice(ws.dstream, d, n * d), {}, g(lo.patch_w, kp * d),
                              g(lo.patch_b, d), n, kp, d);
}

template <typename T>
double Model<T>::score(const FilterbankFeature& feature) const {
  Workspace<T> ws(config_);
  load_input(feature, ws);
  return forward(ws);
}

double weighted_bce(double score, int label, const ClassWeights& w) {
  const double s = std::clamp(score, kScoreClamp, 1.0 - kScoreClamp);
  return label != 0 ? -w.positive * std::log(s) : -w.negative * std::log(1.0 - s);
}

double weighted_bce_logit_grad(double score, int label, const ClassWeights& w) {
  return label != 0 ? w.positive * (score - 1.0) : w.negative * score;
}

template <typename T>
double loss_and_gradient(const Model<T>& model, const FilterbankFeature& feature, int label,
                         const ClassWeights& weights, Workspace<T>& ws, std::span<T> grad) {
  model.load_input(feature, ws);
  const double score = model.forward(ws);
  model.backward(ws, weighted_bce_logit_grad(score, label, weights), grad);
  return weighted_bce(score, label, weights);
}

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, double lr,
               const AdamOptions& opt) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state sizes differ");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(opt.beta1, t);
  const double bc2 = 1.0 - std::pow(opt.beta2, t);
  const T b1 = static_cast<T>(opt.beta1), b2 = static_cast<T>(opt.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T gi = grads[i];
    state.m[i] = b1 * state.m[i] + (T(1) - b1) * gi;
    state.v[i] = b2 * state.v[i] + (T(1) - b2) * gi * gi;
    double p = static_cast<double>(params[i]);
    p -= lr * opt.weight_decay * p;
    const double mhat = static_cast<double>(state.m[i]) / bc1;
    const double vhat = static_cast<double>(state.v[i]) / bc2;
    p -= lr * mhat / (std::sqrt(vhat) + opt.eps);
    params[i] = static_cast<T>(p);
  }
}

double lr_at_epoch(double base, int epoch) {
  if (epoch < 0) throw ArgumentError("lr_at_epoch: negative epoch");
  return base * std::pow(0.5, epoch / 5);
}

Model<float> Checkpoint::model() const {
  Model<float> m(config);
  if (parameters.size() != m.parameters().size()) {
    throw FormatError("checkpoint holds " + std::to_string(parameters.size()) +
                      " parameters, config needs " + std::to_string(m.parameters().size()));
  }
  m.parameters() = parameters;
  return m;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const std::size_t n = ck.parameters.size();
  if (ck.optimizer.m.size() != n || ck.optimizer.v.size() != n) {
    throw ShapeError("save_checkpoint: optimizer state does not match parameters");
  }
  nlohmann::json header = {{"config", config_to_json(ck.config)},
                           {"epoch", ck.epoch},
                           {"step", ck.optimizer.step},
                           {"norm_stats", {{"mean", ck.norm_stats.mean}, {"std", ck.norm_stats.std}}},
                           {"n_params", n},
                           {"dtype", "float32"}};
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  auto put = [&out](const void* p, std::size_t bytes) {
    out.append(static_cast<const char*>(p), bytes);
  };
  const std::uint32_t version = ck.schema_version;
  const std::uint64_t hlen = h.size();
  put(&version, 4);
  put(&hlen, 8);
  out += h;
  put(ck.parameters.data(), n * sizeof(float));
  put(ck.optimizer.m.data(), n * sizeof(float));
  put(ck.optimizer.v.data(), n * sizeof(float));
  const std::uint64_t sum = fnv1a(std::string_view(out).substr(sizeof kCheckpointMagic));
  put(&sum, 8);
  atomic_write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const std::size_t fixed = sizeof kCheckpointMagic + 4 + 8;
  if (bytes.size() < fixed || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw FormatError(path.string() + ": not a checkpoint file");
  }
  std::uint32_t version;
  std::uint64_t hlen;
  std::memcpy(&version, bytes.data() + 8, 4);
  std::memcpy(&hlen, bytes.data() + 12, 8);
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": checkpoint schema version " + std::to_string(version) +
                      ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  if (hlen > bytes.size() - fixed) throw FormatError(path.string() + ": truncated checkpoint");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(fixed, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint header: " + e.what());
  }
  Checkpoint ck;
  std::size_t n = 0;
  try {
    ck.config = config_from_json(header.at("config"));
    ck.epoch = header.at("epoch").get<int>();
    ck.optimizer.step = header.at("step").get<std::uint64_t>();
    ck.norm_stats.mean = header.at("norm_stats").at("mean").get<double>();
    ck.norm_stats.std = header.at("norm_stats").at("std").get<double>();
    n = header.at("n_params").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint header: " + e.what());
  }
  const std::size_t payload = 3 * n * sizeof(float);
  if (bytes.size() != fixed + hlen + payload + 8) {
    throw FormatError(path.string() + ": truncated checkpoint (expected " +
                      std::to_string(fixed + hlen + payload + 8) + " bytes, found " +
                      std::to_string(bytes.size()) + ")");
  }
  std::uint64_t sum;
  std::memcpy(&sum, bytes.data() + bytes.size() - 8, 8);
  if (sum != fnv1a(std::string_view(bytes).substr(8, bytes.size() - 16))) {
    throw FormatError(path.string() + ": checkpoint checksum mismatch");
  }
  try {
    if (parameter_count(ck.config) != n) {
      throw FormatError(path.string() + ": parameter count does not match stored config");
    }
  } catch (const ArgumentError& e) {
    throw FormatError(path.string() + ": invalid stored config: " + e.what());
  }
  const char* base = bytes.data() + fixed + hlen;
  ck.parameters.resize(n);
  ck.optimizer.m.resize(n);
  ck.optimizer.v.resize(n);
  std::memcpy(ck.parameters.data(), base, n * sizeof(float));
  std::memcpy(ck.optimizer.m.data(), base + n * sizeof(float), n * sizeof(float));
  std::memcpy(ck.optimizer.v.data(), base + 2 * n * sizeof(float), n * sizeof(float));
  ck.schema_version = version;
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  auto mismatch = [&](const char* field, std::size_t got, std::size_t want) {
    if (got != want) {
      throw FormatError(path.string() + ": " + field + " mismatch: checkpoint has " +
                        std::to_string(got) + ", expected " + std::to_string(want));
    }
  };
  mismatch("embed_dim", ck.config.embed_dim, expected.embed_dim);
  mismatch("n_layers", ck.config.n_layers, expected.n_layers);
  mismatch("n_heads", ck.config.n_heads, expected.n_heads);
  mismatch("mlp_ratio", ck.config.mlp_ratio, expected.mlp_ratio);
  if (!(ck.config == expected)) throw FormatError(path.string() + ": patch geometry mismatch");
  return ck;
}

template struct Workspace<float>;
template struct Workspace<double>;
template class Model<float>;
template class Model<double>;
template double loss_and_gradient<float>(const Model<float>&, const FilterbankFeature&, int,
                                         const ClassWeights&, Workspace<float>&,
                                         std::span<float>);
template double loss_and_gradient<double>(const Model<double>&, const FilterbankFeature&, int,
                                          const ClassWeights&, Workspace<double>&,
                                          std::span<double>);
template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&,
                               double, const AdamOptions&);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamState<double>&,
                                double, const AdamOptions&);

}  // namespace manatee
