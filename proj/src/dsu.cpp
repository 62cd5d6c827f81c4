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

#include "sasv/dsu.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sasv/errors.hpp"

namespace sasv {

void DSUConfig::Validate() const {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("DSU probability must be in [0, 1]");
  if (!(eps_floor > 0.0)) throw ConfigError("DSU eps floor must be positive");
}

ColumnStats InstanceStats(const Matrix &v) { return ComputeColumnStats(v); }

namespace {

void CheckBatch(std::span<const Matrix> batch) {
  if (batch.empty()) throw ShapeError("DSU on an empty batch");
  const std::size_t channels = batch.front().cols();
  for (const Matrix &m : batch) {
    if (m.cols() != channels)
      throw ShapeError("DSU channel mismatch: " + std::to_string(m.cols()) + " vs " +
                       std::to_string(channels));
    if (m.rows() == 0) throw ShapeError("DSU instance with no frames");
  }
}

// Population std over rows of each column.
std::vector<double> ColumnStd(const Matrix &m, std::vector<double> *mean_out = nullptr) {
  ColumnStats s = ComputeColumnStats(m);
  if (mean_out != nullptr) *mean_out = std::move(s.mean);
  return s.std;
}

}  // namespace

BatchStats ComputeBatchStats(std::span<const Matrix> batch) {
  CheckBatch(batch);
  const std::size_t b_size = batch.size(), channels = batch.front().cols();
  BatchStats stats;
  stats.mu = Matrix(b_size, channels);
  stats.sigma = Matrix(b_size, channels);
  for (std::size_t b = 0; b < b_size; ++b) {
    ColumnStats s = InstanceStats(batch[b]);
    std::copy(s.mean.begin(), s.mean.end(), stats.mu.row(b).begin());
    std::copy(s.std.begin(), s.std.end(), stats.sigma.row(b).begin());
  }
  stats.sigma_mu = ColumnStd(stats.mu);
  stats.sigma_sigma = ColumnStd(stats.sigma);
  return stats;
}

DsuNoise DrawDsuNoise(std::size_t batch_size, std::size_t channels, const DSUConfig &cfg,
                      Rng &rng) {
  cfg.Validate();
  DsuNoise noise;
  noise.active = rng.Bernoulli(cfg.p);
  if (!noise.active) return noise;
  noise.eps_mu = Matrix(batch_size, channels);
  noise.eps_sigma = Matrix(batch_size, channels);
  for (double &v : noise.eps_mu.values()) v = rng.Normal();
  for (double &v : noise.eps_sigma.values()) v = rng.Normal();
  return noise;
}

std::vector<Matrix> DsuApply(std::span<const Matrix> batch, const DsuNoise &noise,
                             const DSUConfig &cfg, DsuCache *cache) {
  CheckBatch(batch);
  cfg.Validate();
  if (!noise.active) {
    if (cache != nullptr) {
      cache->noise = noise;
      cache->eps_floor = cfg.eps_floor;
    }
    return {batch.begin(), batch.end()};
  }
  const std::size_t b_size = batch.size(), channels = batch.front().cols();
  if (noise.eps_mu.rows() != b_size || noise.eps_mu.cols() != channels ||
      noise.eps_sigma.rows() != b_size || noise.eps_sigma.cols() != channels)
    throw ShapeError("DSU noise shape does not match the batch");

  BatchStats stats = ComputeBatchStats(batch);
  Matrix sigma_tilde(b_size, channels);
  std::vector<Matrix> out;
  out.reserve(b_size);
  for (std::size_t b = 0; b < b_size; ++b) {
    const Matrix &x = batch[b];
    Matrix y(x.rows(), channels);
    for (std::size_t c = 0; c < channels; ++c) {
      const double mu = stats.mu(b, c), sigma = stats.sigma(b, c);
      const double mu_t = mu + noise.eps_mu(b, c) * stats.sigma_mu[c];
      const double sigma_t = std::max(0.0, sigma + noise.eps_sigma(b, c) * stats.sigma_sigma[c]);
      sigma_tilde(b, c) = sigma_t;
      const double gain = sigma_t / (sigma + cfg.eps_floor);
      for (std::size_t t = 0; t < x.rows(); ++t) y(t, c) = gain * (x(t, c) - mu) + mu_t;
    }
    out.push_back(std::move(y));
  }
  if (cache != nullptr) {
    cache->inputs.assign(batch.begin(), batch.end());
    cache->stats = std::move(stats);
    cache->noise = noise;
    cache->sigma_tilde = std::move(sigma_tilde);
    cache->eps_floor = cfg.eps_floor;
  }
  return out;
}

std::vector<Matrix> DsuBackward(const DsuCache &cache, std::span<const Matrix> grad_out) {
  if (!cache.noise.active) return {grad_out.begin(), grad_out.end()};
  const std::size_t b_size = cache.inputs.size();
  if (grad_out.size() != b_size) throw ShapeError("DSU backward: batch size mismatch");
  const std::size_t channels = cache.stats.mu.cols();
  const BatchStats &st = cache.stats;
  const double eps = cache.eps_floor;

  Matrix g_mu(b_size, channels), g_sigma(b_size, channels);
  std::vector<double> g_sigma_mu(channels, 0.0), g_sigma_sigma(channels, 0.0);
  std::vector<Matrix> grad_in;
  grad_in.reserve(b_size);

  // Direct paths: through the standardized value, mu~ and sigma~.
  for (std::size_t b = 0; b < b_size; ++b) {
    const Matrix &x = cache.inputs[b];
    const Matrix &gy = grad_out[b];
    if (gy.rows() != x.rows() || gy.cols() != channels)
      throw ShapeError("DSU backward: gradient shape mismatch");
    Matrix gx(x.rows(), channels);
    for (std::size_t c = 0; c < channels; ++c) {
      const double mu = st.mu(b, c), sigma = st.sigma(b, c);
      const double denom = sigma + eps;
      const double sigma_t = cache.sigma_tilde(b, c);
      const bool clamped = sigma + cache.noise.eps_sigma(b, c) * st.sigma_sigma[c] < 0.0;
      double g_sigma_t = 0.0, g_mu_t = 0.0, g_norm_mu = 0.0, g_norm_sigma = 0.0;
      for (std::size_t t = 0; t < x.rows(); ++t) {
        const double centered = x(t, c) - mu;
        const double g = gy(t, c);
        g_sigma_t += g * centered / denom;
        g_mu_t += g;
        const double g_norm = g * sigma_t;  // gradient w.r.t. (x - mu) / denom
        gx(t, c) = g_norm / denom;
        g_norm_mu -= g_norm / denom;
        g_norm_sigma -= g_norm * centered / (denom * denom);
      }
      const double g_sigma_from_tilde = clamped ? 0.0 : g_sigma_t;
      g_mu(b, c) = g_norm_mu + g_mu_t;
      g_sigma(b, c) = g_norm_sigma + g_sigma_from_tilde;
      g_sigma_mu[c] += g_mu_t * cache.noise.eps_mu(b, c);
      g_sigma_sigma[c] += g_sigma_from_tilde * cache.noise.eps_sigma(b, c);
    }
    grad_in.push_back(std::move(gx));
  }

  // Batch uncertainty terms: d Sigma / d s_b = (s_b - mean_b s) / (B * Sigma).
  const double inv_b = 1.0 / static_cast<double>(b_size);
  for (std::size_t c = 0; c < channels; ++c) {
    double mean_mu = 0.0, mean_sigma = 0.0;
    for (std::size_t b = 0; b < b_size; ++b) {
      mean_mu += st.mu(b, c);
      mean_sigma += st.sigma(b, c);
    }
    mean_mu *= inv_b;
    mean_sigma *= inv_b;
    for (std::size_t b = 0; b < b_size; ++b) {
      if (st.sigma_mu[c] > 0.0)
        g_mu(b, c) += g_sigma_mu[c] * (st.mu(b, c) - mean_mu) * inv_b / st.sigma_mu[c];
      if (st.sigma_sigma[c] > 0.0)
        g_sigma(b, c) +=
            g_sigma_sigma[c] * (st.sigma(b, c) - mean_sigma) * inv_b / st.sigma_sigma[c];
    }
  }

  // Instance statistics back to frames.
  for (std::size_t b = 0; b < b_size; ++b) {
    const Matrix &x = cache.inputs[b];
    Matrix &gx = grad_in[b];
    const double inv_t = 1.0 / static_cast<double>(x.rows());
    for (std::size_t c = 0; c < channels; ++c) {
      const double mu = st.mu(b, c), sigma = st.sigma(b, c);
      for (std::size_t t = 0; t < x.rows(); ++t) {
        double g = g_mu(b, c) * inv_t;
        if (sigma > 0.0) g += g_sigma(b, c) * (x(t, c) - mu) * inv_t / sigma;
        gx(t, c) += g;
      }
    }
  }
  return grad_in;
}

std::vector<Matrix> DsuPerturb(std::span<const Matrix> batch, const DSUConfig &cfg, Rng &rng) {
  CheckBatch(batch);
  const DsuNoise noise = DrawDsuNoise(batch.size(), batch.front().cols(), cfg, rng);
  return DsuApply(batch, noise, cfg);
}

}  // namespace sasv
