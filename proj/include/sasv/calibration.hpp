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

#ifndef SASV_CALIBRATION_HPP_
#define SASV_CALIBRATION_HPP_

// Logistic score calibration and ASV/CM fusion.
//
// Both fitters maximize the prior-weighted log-likelihood
//
//   J = pi/N1 sum_pos log sig(z + o) + (1-pi)/N0 sum_neg log sig(-(z + o))
//
// with z the affine map of the scores and o = logit(pi), so a fitted map
// outputs log-likelihood ratios. J is concave; it is maximized by damped
// Newton steps (Levenberg damping, each accepted step non-decreasing in J)
// until the gradient infinity-norm drops below 1e-9, for at most 200
// iterations.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "sasv/metrics.hpp"
#include "sasv/protocol_io.hpp"

namespace sasv {

struct AffineCalibration {
  double scale = 1.0;
  double bias = 0.0;
  double Apply(double s) const { return scale * s + bias; }
};

inline double ApplyAffine(double s, const AffineCalibration &c) { return c.Apply(s); }

struct JointFusionModel {
  double scale_asv = 1.0;
  double scale_cm = 0.0;
  double bias = 0.0;
  double Apply(double s_asv, double s_cm) const { return scale_asv * s_asv + scale_cm * s_cm + bias; }
};

struct FitOptions {
  double prior = 0.5;  // effective target prior pi, in (0, 1)
  int max_iterations = 200;
  double gradient_tolerance = 1e-9;
};

struct FitReport {
  int iterations = 0;
  double gradient_norm = 0.0;      // infinity norm at the returned solution
  std::vector<double> objective;   // J at the start and after every iteration
};

// labels: 1 = positive class, 0 = negative. Throws CalibrationError on
// single-class input, constant scores, a non-positive fitted scale, or
// failure to converge.
AffineCalibration FitCalibration(std::span<const double> scores, std::span<const int> labels,
                                 const FitOptions &options = {}, FitReport *report = nullptr);

// Throws ShapeError on misaligned inputs, CalibrationError on single-class
// input, both scores constant, or failure to converge. A constant input
// makes its scale unidentifiable; the damped solve then returns the
// minimum-change solution and the fused ranking follows the other input.
JointFusionModel FitJointFusion(std::span<const double> asv, std::span<const double> cm,
                                std::span<const int> labels, const FitOptions &options = {},
                                FitReport *report = nullptr);

// Prior-weighted logistic objective J for a given linear model over the
// feature columns (bias column implied). Exposed for tests.
double LogisticObjective(std::span<const std::vector<double>> features,
                         std::span<const int> labels, std::span<const double> weights,
                         double prior);

// Individual calibration of each system, then a joint stage over the
// calibrated scores, then (optionally) a final affine calibration.
struct PreFusionModel {
  AffineCalibration asv;
  AffineCalibration cm;
  JointFusionModel fusion;
  std::optional<AffineCalibration> final_stage;
};

struct JointModel {
  JointFusionModel fusion;
  std::optional<AffineCalibration> final_stage;
};

// Per-trial fused score; higher means more likely a bona fide target.
// Throws Error listing the ids present in only one of the inputs.
ScoreSet FuseScores(const ScoreSet &asv, const ScoreSet &cm, const JointModel &model);
ScoreSet FuseScores(const ScoreSet &asv, const ScoreSet &cm, const PreFusionModel &model);

// Scores of the trials whose label falls in `split`, labelled 1 (positive)
// or 0 (negative). Every trial must have a score and vice versa.
struct LabeledArrays {
  std::vector<double> scores;
  std::vector<int> labels;
};
LabeledArrays SelectForFit(const ScoreSet &scores, const TrialSet &trials, const ClassSplit &split);

// Label mapping used for fitting: ASV = target vs nontarget, CM = bona fide
// (target + nontarget) vs spoof, joint / final stage = target vs the rest.
PreFusionModel FitPreFusion(const ScoreSet &asv, const ScoreSet &cm, const TrialSet &trials,
                            const FitOptions &options = {}, bool final_stage = false);
JointModel FitJoint(const ScoreSet &asv, const ScoreSet &cm, const TrialSet &trials,
                    const FitOptions &options = {}, bool final_stage = false);

// Model files: one line "a b" (affine) or "a_asv a_cm b" (joint).
void WriteAffine(const std::filesystem::path &path, const AffineCalibration &c);
AffineCalibration ReadAffine(const std::filesystem::path &path);
void WriteJoint(const std::filesystem::path &path, const JointFusionModel &m);
JointFusionModel ReadJoint(const std::filesystem::path &path);

}  // namespace sasv

#endif  // SASV_CALIBRATION_HPP_
