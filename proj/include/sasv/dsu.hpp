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

#ifndef SASV_DSU_HPP_
#define SASV_DSU_HPP_

// Feature-statistics uncertainty augmentation over a batch of T x C value
// streams. For each instance b and channel c:
//
//   mu, sigma           per-instance mean / population std over frames
//   Sigma_mu, Sigma_sg  per-channel population std of mu, sigma over the batch
//   mu~    = mu + eps_mu * Sigma_mu
//   sigma~ = max(0, sigma + eps_sg * Sigma_sg)
//   x~     = sigma~ * (x - mu) / (sigma + eps_floor) + mu~
//
// with eps ~ N(0, 1) per (instance, channel). One Bernoulli(p) draw decides
// whether the whole batch is perturbed.

#include <cstddef>
#include <span>
#include <vector>

#include "sasv/numerics.hpp"

namespace sasv {

struct DSUConfig {
  double p = 0.5;
  double eps_floor = 1e-6;

  // Throws ConfigError unless p in [0, 1] and eps_floor > 0.
  void Validate() const;
};

struct BatchStats {
  Matrix mu;                        // B x C
  Matrix sigma;                     // B x C
  std::vector<double> sigma_mu;     // C
  std::vector<double> sigma_sigma;  // C
};

// Sampled perturbation for one batch; kept separate so gradient checks can
// replay the exact same noise.
struct DsuNoise {
  bool active = false;
  Matrix eps_mu;     // B x C, empty when inactive
  Matrix eps_sigma;  // B x C, empty when inactive
};

struct DsuCache {
  std::vector<Matrix> inputs;
  BatchStats stats;
  DsuNoise noise;
  Matrix sigma_tilde;  // B x C, after clamping
  double eps_floor = 1e-6;
};

ColumnStats InstanceStats(const Matrix &v);

// Throws ShapeError on an empty batch or a channel mismatch.
BatchStats ComputeBatchStats(std::span<const Matrix> batch);

// Consumes one uniform for the Bernoulli draw, then (if active) B*C normals
// for eps_mu followed by B*C normals for eps_sigma, row-major.
DsuNoise DrawDsuNoise(std::size_t batch_size, std::size_t channels, const DSUConfig &cfg,
                      Rng &rng);

// Applies `noise` to the batch. Inactive noise returns the inputs unchanged.
// If `cache` is non-null it receives everything DsuBackward needs.
std::vector<Matrix> DsuApply(std::span<const Matrix> batch, const DsuNoise &noise,
                             const DSUConfig &cfg, DsuCache *cache = nullptr);

// Gradient of a scalar loss w.r.t. the DSU inputs given its gradient w.r.t.
// the outputs. Noise is treated as constant; gradients flow through the
// instance statistics and the batch-level uncertainty estimates.
std::vector<Matrix> DsuBackward(const DsuCache &cache, std::span<const Matrix> grad_out);

std::vector<Matrix> DsuPerturb(std::span<const Matrix> batch, const DSUConfig &cfg, Rng &rng);

}  // namespace sasv

#endif  // SASV_DSU_HPP_
