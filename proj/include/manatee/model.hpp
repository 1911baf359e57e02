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

#include "manatee/class_weights.hpp"
#include "manatee/dsp.hpp"

namespace manatee {

// Audio Spectrogram Transformer geometry. Defaults are the desk-scale model;
// `base()` gives the 768/12/12 size.
struct ModelConfig {
  std::size_t input_bins = kMelBins;
  std::size_t input_frames = kFrames;
  std::size_t patch_bins = 16;
  std::size_t patch_frames = 16;
  std::size_t stride_bins = 10;
  std::size_t stride_frames = 10;
  std::size_t embed_dim = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t mlp_ratio = 4;

  static ModelConfig desk() { return {}; }
  static ModelConfig base();
  static ModelConfig tiny();  // 16 wide, 1 layer, 2 heads; gradient checks

  std::size_t grid_bins() const { return (input_bins - patch_bins) / stride_bins + 1; }
  std::size_t grid_frames() const { return (input_frames - patch_frames) / stride_frames + 1; }
  std::size_t num_patches() const { return grid_bins() * grid_frames(); }
  std::size_t tokens() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return patch_bins * patch_frames; }
  std::size_t head_dim() const { return embed_dim / n_heads; }
  std::size_t mlp_dim() const { return embed_dim * mlp_ratio; }

  // Throws ArgumentError on inconsistent geometry.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// N = (floor((H - p_h)/s_h) + 1) * (floor((W - p_w)/s_w) + 1)
std::size_t patch_count(std::size_t height, std::size_t width, std::size_t patch_h,
                        std::size_t patch_w, std::size_t stride_h, std::size_t stride_w);

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Offsets of every tensor inside the flat parameter vector.
struct LayerOffsets {
  std::size_t ln1_gain, ln1_bias;
  std::size_t qkv_w, qkv_b;
  std::size_t proj_w, proj_b;
  std::size_t ln2_gain, ln2_bias;
  std::size_t fc1_w, fc1_b;
  std::size_t fc2_w, fc2_b;
};

struct ParameterLayout {
  std::size_t patch_w = 0, patch_b = 0;
  std::size_t cls = 0;
  std::size_t pos = 0;
  std::vector<LayerOffsets> layers;
  std::size_t final_gain = 0, final_bias = 0;
  std::size_t head_w = 0, head_b = 0;
  std::size_t total = 0;
  std::vector<TensorInfo> tensors;

  explicit ParameterLayout(const ModelConfig& config);
  const TensorInfo& tensor(const std::string& name) const;
};

std::size_t parameter_count(const ModelConfig& config);

// The 60 (for the canonical geometry) flattened 16x16 tiles, frequency-major.
// Requires a normalized feature.
std::vector<std::vector<double>> patchify(const FilterbankFeature& feature,
                                          const ModelConfig& config = ModelConfig{});

// Activations of one forward pass, kept for backward.
template <typename T>
struct Workspace {
  explicit Workspace(const ModelConfig& config);

  struct Layer {
    std::vector<T> input, ln1, ln1_mean, ln1_rstd, qkv, probs, attn, mid, ln2, ln2_mean,
        ln2_rstd, hidden, activated;
  };

  std::vector<T> patches;  // num_patches x patch_dim
  std::vector<T> tokens;   // tokens x embed_dim
  std::vector<Layer> layers;
  std::vector<T> output;  // residual stream after the last block
  std::vector<T> cls_norm;
  T cls_mean = 0, cls_rstd = 0;
  double logit = 0;
  double score = 0;

  // scratch for backward and head slicing
  std::vector<T> residual, dstream, dbuf, dnorm, dattn, dact, dhidden, dqkv, dcls;
  std::vector<T> head_q, head_k, head_v, head_out, head_dq, head_dk, head_dv, head_dout, dscores;
};

template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& config);

  // Truncated-normal(0.02) projections, cls and positions; zero biases and
  // layer-norm offsets; unit layer-norm gains.
  void initialize(std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const ParameterLayout& layout() const { return layout_; }
  std::vector<T>& parameters() { return params_; }
  const std::vector<T>& parameters() const { return params_; }
  std::span<T> tensor(const std::string& name);
  std::span<const T> tensor(const std::string& name) const;

  // Loads patch vectors from a normalized feature into the workspace.
  void load_input(const FilterbankFeature& feature, Workspace<T>& ws) const;

  // Runs the encoder on ws.patches; returns the sigmoid score and keeps the
  // logit and all activations in `ws`. Throws NumericError naming the block
  // if anything non-finite appears.
  double forward(Workspace<T>& ws) const;

  // Accumulates d(loss)/d(params) into `grad` given d(loss)/d(logit).
  void backward(Workspace<T>& ws, double dlogit, std::span<T> grad) const;

  double score(const FilterbankFeature& feature) const;

 private:
  ModelConfig config_;
  ParameterLayout layout_;
  std::vector<T> params_;
};

inline constexpr double kScoreClamp = 1e-7;

// Weighted binary cross-entropy on a clamped score.
double weighted_bce(double score, int label, const ClassWeights& weights);

// d(loss)/d(logit) = w * (score - label) with w the weight of the active class.
double weighted_bce_logit_grad(double score, int label, const ClassWeights& weights);

// Forward + backward for one labelled feature; accumulates into grad and
// returns the loss.
template <typename T>
double loss_and_gradient(const Model<T>& model, const FilterbankFeature& feature, int label,
                         const ClassWeights& weights, Workspace<T>& ws, std::span<T> grad);

struct AdamOptions {
  double weight_decay = 5e-7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  std::uint64_t step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, T(0)), v(n, T(0)) {}
};

// Bias-corrected Adam with decoupled weight decay
// (param -= lr * wd * param before the Adam delta).
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, double lr,
               const AdamOptions& options = {});

// base * 0.5^floor(epoch / 5)
double lr_at_epoch(double base, int epoch);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  std::vector<float> parameters;
  AdamState<float> optimizer;
  int epoch = 0;
  NormStats norm_stats;
  std::uint32_t schema_version = kCheckpointVersion;

  Model<float> model() const;
};

// Binary format: magic, version, JSON header (config, epoch, stats, counts),
// then raw little-endian float32 arrays for parameters, m and v.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Also checks that the stored config matches `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace manatee
