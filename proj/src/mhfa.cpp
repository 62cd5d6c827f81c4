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

#include "sasv/mhfa.hpp"

#include <cmath>
#include <string>

#include "sasv/errors.hpp"
#include "sasv/parallel.hpp"
#include "sasv/simd.hpp"

namespace sasv {

void MHFAConfig::Validate() const {
  if (num_layers == 0 || input_dim == 0 || num_heads == 0 || compression_dim == 0 ||
      embed_dim == 0)
    throw ConfigError("MHFA config fields must all be >= 1");
}

MHFAParams MHFAParams::Zeros(const MHFAConfig &cfg) {
  cfg.Validate();
  MHFAParams p;
  p.key_layer_logits.assign(cfg.num_layers, 0.0);
  p.value_layer_logits.assign(cfg.num_layers, 0.0);
  p.key_proj = Matrix(cfg.input_dim, cfg.compression_dim);
  p.value_proj = Matrix(cfg.input_dim, cfg.compression_dim);
  p.attention_proj = Matrix(cfg.compression_dim, cfg.num_heads);
  p.output_proj = Matrix(cfg.pooled_dim(), cfg.embed_dim);
  p.output_bias.assign(cfg.embed_dim, 0.0);
  return p;
}

std::array<std::span<double>, MHFAParams::kNumTensors> MHFAParams::Tensors() {
  return {std::span<double>(key_layer_logits), std::span<double>(value_layer_logits),
          key_proj.values(),   value_proj.values(),
          attention_proj.values(), output_proj.values(),
          std::span<double>(output_bias)};
}

std::array<std::span<const double>, MHFAParams::kNumTensors> MHFAParams::Tensors() const {
  return {std::span<const double>(key_layer_logits), std::span<const double>(value_layer_logits),
          key_proj.values(),   value_proj.values(),
          attention_proj.values(), output_proj.values(),
          std::span<const double>(output_bias)};
}

std::size_t MHFAParams::NumValues() const {
  std::size_t n = 0;
  for (auto t : Tensors()) n += t.size();
  return n;
}

void MHFAParams::Validate(const MHFAConfig &cfg) const {
  const MHFAParams ref = Zeros(cfg);
  const auto mine = Tensors();
  const auto want = ref.Tensors();
  for (std::size_t i = 0; i < kNumTensors; ++i) {
    if (mine[i].size() != want[i].size())
      throw ShapeError("MHFA parameter " + std::string(kTensorNames[i]) + " has " +
                       std::to_string(mine[i].size()) + " values, expected " +
                       std::to_string(want[i].size()));
    RequireFinite(mine[i], kTensorNames[i].data());
  }
  if (key_proj.rows() != cfg.input_dim || value_proj.rows() != cfg.input_dim ||
      attention_proj.rows() != cfg.compression_dim || output_proj.rows() != cfg.pooled_dim())
    throw ShapeError("MHFA projection shapes do not match the config");
}

MHFAParams InitMHFA(const MHFAConfig &cfg, Rng &rng) {
  MHFAParams p = MHFAParams::Zeros(cfg);
  auto fill = [&rng](Matrix &m) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(m.rows()));
    for (double &v : m.values()) v = rng.Uniform(-bound, bound);
  };
  fill(p.key_proj);
  fill(p.value_proj);
  fill(p.attention_proj);
  fill(p.output_proj);
  return p;
}

Matrix LayerAggregate(const LayeredFeatures &x, std::span<const double> logits) {
  if (logits.size() != x.num_layers)
    throw ShapeError("layer aggregation: " + std::to_string(logits.size()) +
                     " weights for " + std::to_string(x.num_layers) + " layers");
  const std::vector<double> weights = Softmax(logits);
  Matrix out(x.num_frames, x.dim);
  const std::size_t n = out.size();
  for (std::size_t l = 0; l < x.num_layers; ++l)
    simd::Axpy(weights[l], x.LayerData(l), out.values().data(), n);
  return out;
}

namespace {

void CheckInput(const LayeredFeatures &x, const MHFAConfig &cfg) {
  if (x.num_layers != cfg.num_layers || x.dim != cfg.input_dim)
    throw ShapeError("MHFA input is " + std::to_string(x.num_layers) + " layers x " +
                     std::to_string(x.dim) + " dims, model expects " +
                     std::to_string(cfg.num_layers) + " x " + std::to_string(cfg.input_dim));
  if (x.num_frames == 0) throw ShapeError("MHFA input has no frames");
}

// Everything after the layer aggregation and DSU for one instance.
Embedding HeadForward(InstanceCache &ic, const MHFAParams &p, const MHFAConfig &cfg) {
  const std::size_t frames = ic.key_feat.rows();
  const std::size_t heads = cfg.num_heads, cmp = cfg.compression_dim;
  ic.key = MatMul(ic.key_feat, p.key_proj);
  ic.value = MatMul(ic.value_feat, p.value_proj);
  Matrix logits = MatMul(ic.key, p.attention_proj);

  ic.attention = Matrix(frames, heads);
  std::vector<double> column(frames);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t t = 0; t < frames; ++t) column[t] = logits(t, h);
    const std::vector<double> a = Softmax(column);
    for (std::size_t t = 0; t < frames; ++t) ic.attention(t, h) = a[t];
  }

  const auto &k = simd::Kernels();
  ic.pooled.assign(cfg.pooled_dim(), 0.0);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t t = 0; t < frames; ++t)
      k.axpy(ic.attention(t, h), ic.value.row(t).data(), ic.pooled.data() + h * cmp, cmp);

  Embedding e(p.output_bias);
  for (std::size_t i = 0; i < ic.pooled.size(); ++i)
    k.axpy(ic.pooled[i], p.output_proj.row(i).data(), e.data(), cfg.embed_dim);
  RequireFinite(e, "MHFA embedding");
  return e;
}

void AddInto(Matrix &acc, const Matrix &m) {
  simd::Axpy(1.0, m.values().data(), acc.values().data(), m.size());
}

}  // namespace

ForwardResult MHFAForwardBatch(std::span<const LayeredFeatures *const> batch,
                               const MHFAParams &params, const MHFAConfig &cfg,
                               const ForwardOptions &options) {
  cfg.Validate();
  params.Validate(cfg);
  if (batch.empty()) throw ShapeError("MHFA forward on an empty batch");
  for (const LayeredFeatures *x : batch) CheckInput(*x, cfg);

  const std::size_t b_size = batch.size();
  std::vector<InstanceCache> caches(b_size);
  const std::vector<double> key_weights = Softmax(params.key_layer_logits);
  const std::vector<double> value_weights = Softmax(params.value_layer_logits);

  ParallelFor(b_size, options.threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      InstanceCache &ic = caches[b];
      ic.key_feat = LayerAggregate(*batch[b], params.key_layer_logits);
      ic.value_feat = LayerAggregate(*batch[b], params.value_layer_logits);
    }
  });

  ForwardResult result;
  DsuCache dsu_cache;
  if (options.training && options.dsu != nullptr) {
    std::vector<Matrix> values;
    values.reserve(b_size);
    for (auto &ic : caches) values.push_back(std::move(ic.value_feat));
    DsuNoise drawn;
    const DsuNoise *noise = options.noise;
    if (noise == nullptr) {
      if (options.rng == nullptr) throw ConfigError("DSU in training mode needs an rng");
      drawn = DrawDsuNoise(b_size, cfg.input_dim, *options.dsu, *options.rng);
      noise = &drawn;
    }
    std::vector<Matrix> perturbed =
        DsuApply(values, *noise, *options.dsu, options.keep_cache ? &dsu_cache : nullptr);
    for (std::size_t b = 0; b < b_size; ++b) caches[b].value_feat = std::move(perturbed[b]);
  }

  result.embeddings.resize(b_size);
  ParallelFor(b_size, options.threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b)
      result.embeddings[b] = HeadForward(caches[b], params, cfg);
  });

  if (options.keep_cache) {
    for (std::size_t b = 0; b < b_size; ++b) {
      caches[b].input = *batch[b];
      caches[b].key_weights = key_weights;
      caches[b].value_weights = value_weights;
    }
    result.cache = ForwardCache{cfg, std::move(caches), std::move(dsu_cache)};
  }
  return result;
}

ForwardResult MHFAForward(const LayeredFeatures &x, const MHFAParams &params,
                          const MHFAConfig &cfg, const ForwardOptions &options) {
  const LayeredFeatures *one[] = {&x};
  return MHFAForwardBatch(one, params, cfg, options);
}

MHFAGradients MHFABackward(const ForwardCache &cache, const MHFAParams &params,
                           std::span<const Embedding> grad_embeddings, bool input_grads,
                           std::size_t threads) {
  const MHFAConfig &cfg = cache.config;
  params.Validate(cfg);
  const std::size_t b_size = cache.instances.size();
  if (grad_embeddings.size() != b_size)
    throw ShapeError("MHFA backward: " + std::to_string(grad_embeddings.size()) +
                     " embedding gradients for a cached batch of " + std::to_string(b_size));
  for (const Embedding &g : grad_embeddings)
    if (g.size() != cfg.embed_dim) throw ShapeError("MHFA backward: embedding gradient size");

  const std::size_t heads = cfg.num_heads, cmp = cfg.compression_dim;
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, b_size));
  std::vector<MHFAParams> partial(workers, MHFAParams::Zeros(cfg));
  std::vector<Matrix> grad_key_feat(b_size), grad_value_feat(b_size);

  // Head: output projection, pooling, attention, key/value projections.
  ParallelFor(b_size, workers, [&](std::size_t w, std::size_t begin, std::size_t end) {
    const auto &k = simd::Kernels();
    MHFAParams &g = partial[w];
    for (std::size_t b = begin; b < end; ++b) {
      const InstanceCache &ic = cache.instances[b];
      const Embedding &ge = grad_embeddings[b];
      const std::size_t frames = ic.key.rows();

      k.axpy(1.0, ge.data(), g.output_bias.data(), cfg.embed_dim);
      std::vector<double> g_pooled(cfg.pooled_dim());
      for (std::size_t i = 0; i < g_pooled.size(); ++i) {
        k.axpy(ic.pooled[i], ge.data(), g.output_proj.row(i).data(), cfg.embed_dim);
        g_pooled[i] = k.dot(params.output_proj.row(i).data(), ge.data(), cfg.embed_dim);
      }

      Matrix g_value(frames, cmp);
      Matrix g_logits(frames, heads);
      for (std::size_t h = 0; h < heads; ++h) {
        const double *gp = g_pooled.data() + h * cmp;
        double weighted = 0.0;
        for (std::size_t t = 0; t < frames; ++t) {
          const double a = ic.attention(t, h);
          k.axpy(a, gp, g_value.row(t).data(), cmp);
          const double ga = k.dot(gp, ic.value.row(t).data(), cmp);
          g_logits(t, h) = ga;
          weighted += a * ga;
        }
        for (std::size_t t = 0; t < frames; ++t)
          g_logits(t, h) = ic.attention(t, h) * (g_logits(t, h) - weighted);
      }

      AddInto(g.attention_proj, MatMulTransA(ic.key, g_logits));
      const Matrix g_key = MatMulTransB(g_logits, params.attention_proj);
      AddInto(g.key_proj, MatMulTransA(ic.key_feat, g_key));
      AddInto(g.value_proj, MatMulTransA(ic.value_feat, g_value));
      grad_key_feat[b] = MatMulTransB(g_key, params.key_proj);
      grad_value_feat[b] = MatMulTransB(g_value, params.value_proj);
    }
  });

  if (cache.dsu.noise.active) grad_value_feat = DsuBackward(cache.dsu, grad_value_feat);

  // Layer aggregation.
  MHFAGradients out;
  if (input_grads) out.inputs.resize(b_size);
  ParallelFor(b_size, workers, [&](std::size_t w, std::size_t begin, std::size_t end) {
    const auto &k = simd::Kernels();
    MHFAParams &g = partial[w];
    for (std::size_t b = begin; b < end; ++b) {
      const InstanceCache &ic = cache.instances[b];
      const LayeredFeatures &x = ic.input;
      const std::size_t n = static_cast<std::size_t>(x.num_frames) * x.dim;
      const double *gk = grad_key_feat[b].values().data();
      const double *gv = grad_value_feat[b].values().data();
      std::vector<double> gak(cfg.num_layers), gav(cfg.num_layers);
      double sum_k = 0.0, sum_v = 0.0;
      for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        gak[l] = k.dot(gk, x.LayerData(l), n);
        gav[l] = k.dot(gv, x.LayerData(l), n);
        sum_k += ic.key_weights[l] * gak[l];
        sum_v += ic.value_weights[l] * gav[l];
      }
      for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        g.key_layer_logits[l] += ic.key_weights[l] * (gak[l] - sum_k);
        g.value_layer_logits[l] += ic.value_weights[l] * (gav[l] - sum_v);
      }
      if (input_grads) {
        LayeredFeatures gx = LayeredFeatures::Zeros(x.num_layers, x.num_frames, x.dim);
        for (std::size_t l = 0; l < cfg.num_layers; ++l) {
          double *dst = gx.data.data() + l * n;
          k.axpy(ic.key_weights[l], gk, dst, n);
          k.axpy(ic.value_weights[l], gv, dst, n);
        }
        out.inputs[b] = std::move(gx);
      }
    }
  });

  out.params = std::move(partial[0]);
  for (std::size_t w = 1; w < workers; ++w) {
    auto dst = out.params.Tensors();
    const auto src = partial[w].Tensors();
    for (std::size_t i = 0; i < MHFAParams::kNumTensors; ++i)
      simd::Axpy(1.0, src[i].data(), dst[i].data(), src[i].size());
  }
  return out;
}

}  // namespace sasv
