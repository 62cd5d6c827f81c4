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

#ifndef SASV_LOSSES_HPP_
#define SASV_LOSSES_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "sasv/numerics.hpp"

namespace sasv {

struct BceResult {
  double loss = 0.0;
  double grad = 0.0;  // d loss / d logit = sigmoid(logit) - label
};

// label 1 = bona fide, 0 = spoof. Stable for any finite logit.
BceResult BceWithLogit(double logit, int label);

double Sigmoid(double x);

struct AAMConfig {
  std::size_t num_classes = 0;
  double margin = 0.2;  // radians
  double scale = 30.0;

  // Throws ConfigError unless 0 <= margin < pi/2 and scale > 0.
  void Validate() const;
};

struct AamResult {
  double loss = 0.0;
  std::vector<double> grad_embedding;  // E
  Matrix grad_weights;                 // num_classes x E
};

// Additive angular margin softmax. Rows of `class_weights` are class
// centres (normalized internally). Logits are s*cos(theta_j) for j != label
// and s*cos(theta_label + margin) for the label. Throws NumericError on a
// zero-norm embedding or weight row, ShapeError on a dimension mismatch.
AamResult AamSoftmax(std::span<const double> embedding, const Matrix &class_weights,
                     std::size_t label, const AAMConfig &cfg);

// dot(a, b) / (|a| |b|). Throws NumericError on a zero-norm input.
double CosineScore(std::span<const double> a, std::span<const double> b);

// Adaptive symmetric normalization:
//   0.5 * [(raw - mu_e) / sd_e + (raw - mu_t) / sd_t]
// where mu / sd (population) are taken over the top_k largest scores of each
// cohort. Throws Error on an empty cohort, an invalid top_k, or a zero sd.
double AdaptiveSNorm(double raw, std::span<const double> enroll_cohort_scores,
                     std::span<const double> test_cohort_scores, std::size_t top_k);

struct CohortEmbeddings {
  std::vector<std::vector<double>> embeddings;
  std::size_t top_k = 200;
};

// Cosine score of (enroll, test) normalized against the cohort. top_k is
// clamped to the cohort size.
double SNormCosineScore(std::span<const double> enroll, std::span<const double> test,
                        const CohortEmbeddings &cohort);

}  // namespace sasv

#endif  // SASV_LOSSES_HPP_
