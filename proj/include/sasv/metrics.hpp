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

#ifndef SASV_METRICS_HPP_
#define SASV_METRICS_HPP_

// Threshold-sweep detection metrics. Decision rule everywhere: accept iff
// score > threshold, so ties at the threshold are rejected. A sweep visits
// threshold = -inf (accept everything) followed by every distinct score in
// ascending order (the last one rejects everything).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sasv/protocol_io.hpp"

namespace sasv {

struct LabeledScore {
  double score = 0.0;
  TrialLabel label = TrialLabel::kUnknown;
};

// Which labels count as the positive (accept) class and which as negative.
struct ClassSplit {
  std::vector<TrialLabel> positive;
  std::vector<TrialLabel> negative;

  static ClassSplit Asv() { return {{TrialLabel::kTarget}, {TrialLabel::kNontarget}}; }
  static ClassSplit Cm() {
    return {{TrialLabel::kTarget, TrialLabel::kNontarget}, {TrialLabel::kSpoof}};
  }
  static ClassSplit Sasv() {
    return {{TrialLabel::kTarget}, {TrialLabel::kNontarget, TrialLabel::kSpoof}};
  }
};

struct DetPoint {
  double threshold = 0.0;
  double p_miss = 0.0;
  double p_fa = 0.0;
};

// Throws Error if either side of the split has no trials. Trials whose label
// is in neither side are ignored.
std::vector<DetPoint> DetSweep(std::span<const LabeledScore> scores, const ClassSplit &split);

// Equal error rate on a sweep: the first point with P_fa <= P_miss, linearly
// interpolated against its predecessor when the rates do not coincide.
double EerFromSweep(std::span<const DetPoint> sweep);

// Target vs nontarget unless another split is given.
double Eer(std::span<const LabeledScore> scores, const ClassSplit &split = ClassSplit::Asv());

struct CostResult {
  double value = 0.0;
  double threshold = 0.0;  // lowest threshold attaining the minimum
};

struct DCFParams {
  double p_target = 0.05;
  double c_miss = 1.0;
  double c_fa = 1.0;
  void Validate() const;
};

// min over thresholds of c_miss*p*P_miss + c_fa*(1-p)*P_fa, divided by
// min(c_miss*p, c_fa*(1-p)).
CostResult MinDcf(std::span<const LabeledScore> scores, const DCFParams &params = {},
                  const ClassSplit &split = ClassSplit::Asv());

struct ADCFParams {
  double pi_target = 0.9405;
  double pi_nontarget = 0.0095;
  double pi_spoof = 0.05;
  double c_miss = 1.0;
  double c_fa_nontarget = 10.0;
  double c_fa_spoof = 10.0;
  // Throws ConfigError unless priors form a simplex and costs are positive.
  void Validate() const;
  // Cost of the better of always-accept / always-reject.
  double DefaultCost() const;
};

// Single-threshold three-class detection cost, normalized by DefaultCost().
// Throws Error if any of target / nontarget / spoof is missing.
CostResult MinADcf(std::span<const LabeledScore> scores, const ADCFParams &params = {});

// Joins a score set with a trial list. Trials without a score (or scores
// without a trial) are an Error that names the first offending id.
std::vector<LabeledScore> JoinScores(const ScoreSet &scores, const TrialSet &trials);

// Fixed-point formatting used by the report tables, e.g. 0.02747.
std::string FormatFixed(double value, int decimals);

}  // namespace sasv

#endif  // SASV_METRICS_HPP_
