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

#include "sasv/losses.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>

#include "sasv/errors.hpp"
#include "sasv/simd.hpp"

namespace sasv {

double Sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

BceResult BceWithLogit(double logit, int label) {
  if (!std::isfinite(logit)) throw NumericError("BCE logit is not finite");
  const double y = label != 0 ? 1.0 : 0.0;
  // max(z, 0) - z*y + log(1 + exp(-|z|))
  BceResult r;
  r.loss = std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
  r.grad = Sigmoid(logit) - y;
  return r;
}

void AAMConfig::Validate() const {
  if (!(margin >= 0.0 && margin < std::numbers::pi / 2))
    throw ConfigError("AAM margin must be in [0, pi/2)");
  if (!(scale > 0.0)) throw ConfigError("AAM scale must be positive");
}

namespace {

double Norm(std::span<const double> v) { return std::sqrt(simd::Dot(v.data(), v.data(), v.size())); }

}  // namespace

AamResult AamSoftmax(std::span<const double> embedding, const Matrix &class_weights,
                     std::size_t label, const AAMConfig &cfg) {
  cfg.Validate();
  const std::size_t dim = embedding.size(), classes = class_weights.rows();
  if (class_weights.cols() != dim)
    throw ShapeError("AAM class weights have " + std::to_string(class_weights.cols()) +
                     " columns for a " + std::to_string(dim) + "-dim embedding");
  if (label >= classes) throw ShapeError("AAM label out of range");
  const double e_norm = Norm(embedding);
  if (!(e_norm > 0.0)) throw NumericError("AAM embedding has zero norm");

  std::vector<double> cosines(classes), w_norms(classes), logits(classes);
  for (std::size_t j = 0; j < classes; ++j) {
    w_norms[j] = Norm(class_weights.row(j));
    if (!(w_norms[j] > 0.0))
      throw NumericError("AAM class weight row " + std::to_string(j) + " has zero norm");
    const double c = simd::Dot(class_weights.row(j).data(), embedding.data(), dim) /
                     (w_norms[j] * e_norm);
    cosines[j] = std::clamp(c, -1.0, 1.0);
    logits[j] = cfg.scale * cosines[j];
  }
  // d logit_y / d cos_y; sin(theta + m) / sin(theta) with a floor on sin(theta).
  const double theta = std::acos(cosines[label]);
  if (cfg.margin != 0.0) logits[label] = cfg.scale * std::cos(theta + cfg.margin);
  const double dlogit_dcos =
      cfg.margin == 0.0 ? cfg.scale
                        : cfg.scale * std::sin(theta + cfg.margin) / std::max(std::sin(theta), 1e-12);

  const std::vector<double> probs = Softmax(logits);
  AamResult r;
  r.loss = -std::log(std::max(probs[label], 1e-300));
  r.grad_embedding.assign(dim, 0.0);
  r.grad_weights = Matrix(classes, dim);
  for (std::size_t j = 0; j < classes; ++j) {
    const double g_logit = probs[j] - (j == label ? 1.0 : 0.0);
    const double g_cos = g_logit * (j == label ? dlogit_dcos : cfg.scale);
    if (g_cos == 0.0) continue;
    // d cos / d e = w / (|w||e|) - cos * e / |e|^2
    // d cos / d w = e / (|w||e|) - cos * w / |w|^2
    const auto w = class_weights.row(j);
    const double inv = 1.0 / (w_norms[j] * e_norm);
    auto gw = r.grad_weights.row(j);
    for (std::size_t d = 0; d < dim; ++d) {
      r.grad_embedding[d] += g_cos * (w[d] * inv - cosines[j] * embedding[d] / (e_norm * e_norm));
      gw[d] = g_cos * (embedding[d] * inv - cosines[j] * w[d] / (w_norms[j] * w_norms[j]));
    }
  }
  return r;
}

double CosineScore(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine score of vectors of different length");
  const double na = Norm(a), nb = Norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw NumericError("cosine score of a zero-norm vector");
  return std::clamp(simd::Dot(a.data(), b.data(), a.size()) / (na * nb), -1.0, 1.0);
}

namespace {

struct TopStats {
  double mean;
  double sd;
};

TopStats TopKStats(std::span<const double> scores, std::size_t top_k, const char *side) {
  if (scores.empty()) throw Error(std::string("s-norm: empty ") + side + " cohort");
  if (top_k == 0 || top_k > scores.size())
    throw Error(std::string("s-norm: top_k out of range for ") + side + " cohort");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(top_k),
                    sorted.end(), std::greater<>());
  double mean = 0.0;
  for (std::size_t i = 0; i < top_k; ++i) mean += sorted[i];
  mean /= static_cast<double>(top_k);
  double var = 0.0;
  for (std::size_t i = 0; i < top_k; ++i) var += (sorted[i] - mean) * (sorted[i] - mean);
  const double sd = std::sqrt(var / static_cast<double>(top_k));
  if (!(sd > 0.0)) throw Error(std::string("s-norm: degenerate ") + side + " cohort (zero std)");
  return {mean, sd};
}

}  // namespace

double AdaptiveSNorm(double raw, std::span<const double> enroll_cohort_scores,
                     std::span<const double> test_cohort_scores, std::size_t top_k) {
  const TopStats e = TopKStats(enroll_cohort_scores, top_k, "enrollment");
  const TopStats t = TopKStats(test_cohort_scores, top_k, "test");
  return 0.5 * ((raw - e.mean) / e.sd + (raw - t.mean) / t.sd);
}

double SNormCosineScore(std::span<const double> enroll, std::span<const double> test,
                        const CohortEmbeddings &cohort) {
  std::vector<double> enroll_scores, test_scores;
  enroll_scores.reserve(cohort.embeddings.size());
  test_scores.reserve(cohort.embeddings.size());
  for (const auto &c : cohort.embeddings) {
    enroll_scores.push_back(CosineScore(enroll, c));
    test_scores.push_back(CosineScore(test, c));
  }
  const std::size_t k = std::min(cohort.top_k, cohort.embeddings.size());
  return AdaptiveSNorm(CosineScore(enroll, test), enroll_scores, test_scores, k);
}

}  // namespace sasv
