// Copyright 2026  The sasvkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef SASV_MHFA_HPP_
#define SASV_MHFA_HPP_

// Multi-head factorized attention back-end over layered frame features.
//
//   K_feat = sum_l softmax(w_k)_l Z_l          V_feat = sum_l softmax(w_v)_l Z_l
//   K = K_feat W_k   (T x C)                   V = V_feat' W_v   (T x C)
//   A = softmax over frames of K W_att          (T x H, each column sums to 1)
//   pooled_h = sum_t A(t, h) V(t, :)            (C per head, heads concatenated)
//   e = pooled W_out + b_out                    (E)
//
// V_feat' is V_feat after DSU in training mode, V_feat otherwise. All heads
// pool the same C-dimensional value stream.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sasv/dsu.hpp"
#include "sasv/numerics.hpp"
#include "sasv/protocol_io.hpp"

namespace sasv {

struct MHFAConfig {
  std::size_t num_layers = 1;
  std::size_t input_dim = 1;
  std::size_t num_heads = 32;
  std::size_t compression_dim = 128;
  std::size_t embed_dim = 256;

  std::size_t pooled_dim() const { return num_heads * compression_dim; }
  // Throws ConfigError if any field is zero.
  void Validate() const;
  bool operator==(const MHFAConfig &) const = default;
};

struct MHFAParams {
  std::vector<double> key_layer_logits;    // L
  std::vector<double> value_layer_logits;  // L
  Matrix key_proj;                         // D x C
  Matrix value_proj;                       // D x C
  Matrix attention_proj;                   // C x H
  Matrix output_proj;                      // (H*C) x E
  std::vector<double> output_bias;         // E

  static constexpr std::size_t kNumTensors = 7;
  static constexpr std::array<std::string_view, kNumTensors> kTensorNames = {
      "key_layer_logits", "value_layer_logits", "key_proj",   "value_proj",
      "attention_proj",   "output_proj",        "output_bias"};

  static MHFAParams Zeros(const MHFAConfig &cfg);

  // Views in kTensorNames order.
  std::array<std::span<double>, kNumTensors> Tensors();
  std::array<std::span<const double>, kNumTensors> Tensors() const;
  std::size_t NumValues() const;

  // Throws ShapeError if any tensor disagrees with `cfg`, NumericError if
  // any value is non-finite.
  void Validate(const MHFAConfig &cfg) const;

  bool operator==(const MHFAParams &) const = default;
};

using Embedding = std::vector<double>;

// Layer logits start at zero (uniform layer attention); projections are
// drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the output bias is zero.
MHFAParams InitMHFA(const MHFAConfig &cfg, Rng &rng);

// output(t, d) = sum_l softmax(logits)_l X(l, t, d). Throws ShapeError if
// logits.size() != X.num_layers.
Matrix LayerAggregate(const LayeredFeatures &x, std::span<const double> logits);

struct InstanceCache {
  LayeredFeatures input;
  std::vector<double> key_weights;    // softmax(w_k)
  std::vector<double> value_weights;  // softmax(w_v)
  Matrix key_feat;
  Matrix value_feat;                  // after DSU (equal to the aggregate otherwise)
  Matrix key;
  Matrix value;
  Matrix attention;                   // T x H
  std::vector<double> pooled;         // H*C
};

struct ForwardCache {
  MHFAConfig config;
  std::vector<InstanceCache> instances;
  DsuCache dsu;
};

struct ForwardOptions {
  bool training = false;
  bool keep_cache = false;
  // DSU runs only when training and dsu != nullptr. Noise comes from
  // `noise` when given, otherwise it is drawn from `rng`.
  const DSUConfig *dsu = nullptr;
  const DsuNoise *noise = nullptr;
  Rng *rng = nullptr;
  std::size_t threads = 1;
};

struct ForwardResult {
  std::vector<Embedding> embeddings;
  std::optional<ForwardCache> cache;
};

ForwardResult MHFAForwardBatch(std::span<const LayeredFeatures *const> batch,
                               const MHFAParams &params, const MHFAConfig &cfg,
                               const ForwardOptions &options);

// Single-utterance convenience wrapper. A one-instance batch has zero batch
// uncertainty, so DSU reduces to the eps_floor rescaling.
ForwardResult MHFAForward(const LayeredFeatures &x, const MHFAParams &params,
                          const MHFAConfig &cfg, const ForwardOptions &options = {});

struct MHFAGradients {
  MHFAParams params;
  std::vector<LayeredFeatures> inputs;  // empty unless requested
};

// Exact gradients of sum_b <grad_embeddings[b], e_b> for every parameter
// (and optionally every input). Throws ShapeError when the cache, params and
// gradients disagree.
MHFAGradients MHFABackward(const ForwardCache &cache, const MHFAParams &params,
                           std::span<const Embedding> grad_embeddings,
                           bool input_grads = false, std::size_t threads = 1);

}  // namespace sasv

#endif  // SASV_MHFA_HPP_
