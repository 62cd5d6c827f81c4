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


// Brute-force threshold enumeration: every distinct score (plus -inf) is
// tried as a threshold and each class is counted directly. Quadratic, and
// deliberately independent of the sorted sweep used by the library.

#ifndef SASV_TESTS_METRIC_ORACLE_HPP_
#define SASV_TESTS_METRIC_ORACLE_HPP_

#include <algorithm>
#include <limits>
#include <set>
#include <vector>

#include "sasv/metrics.hpp"

namespace sasv::testing {

inline bool InSet(const std::vector<TrialLabel> &set, TrialLabel l) {
  return std::find(set.begin(), set.end(), l) != set.end();
}

inline std::vector<double> OracleThresholds(const std::vector<LabeledScore> &scores) {
  std::set<double> distinct;
  for (const auto &s : scores) distinct.insert(s.score);
  std::vector<double> out{-std::numeric_limits<double>::infinity()};
  out.insert(out.end(), distinct.begin(), distinct.end());
  return out;
}

// Fraction of `labels` trials accepted (score > tau).
inline double AcceptRate(const std::vector<LabeledScore> &scores,
                         const std::vector<TrialLabel> &labels, double tau) {
  std::size_t n = 0, acc = 0;
  for (const auto &s : scores)
    if (InSet(labels, s.label)) {
      ++n;
      acc += s.score > tau ? 1 : 0;
    }
  return static_cast<double>(acc) / static_cast<double>(n);
}

inline double RejectRate(const std::vector<LabeledScore> &scores,
                         const std::vector<TrialLabel> &labels, double tau) {
  std::size_t n = 0, rej = 0;
  for (const auto &s : scores)
    if (InSet(labels, s.label)) {
      ++n;
      rej += s.score <= tau ? 1 : 0;
    }
  return static_cast<double>(rej) / static_cast<double>(n);
}

inline std::vector<DetPoint> OracleSweep(const std::vector<LabeledScore> &scores,
                                         const ClassSplit &split) {
  // Trials outside the split contribute no thresholds.
  std::vector<LabeledScore> used;
  for (const auto &s : scores)
    if (InSet(split.positive, s.label) || InSet(split.negative, s.label)) used.push_back(s);
  std::vector<DetPoint> out;
  for (double tau : OracleThresholds(used)) {
    std::size_t n_pos = 0, miss = 0, n_neg = 0, fa = 0;
    for (const auto &s : scores) {
      if (InSet(split.positive, s.label)) {
        ++n_pos;
        miss += s.score <= tau ? 1 : 0;
      } else if (InSet(split.negative, s.label)) {
        ++n_neg;
        fa += s.score > tau ? 1 : 0;
      }
    }
    out.push_back({tau, static_cast<double>(miss) / static_cast<double>(n_pos),
                   static_cast<double>(fa) / static_cast<double>(n_neg)});
  }
  return out;
}

// First crossing of P_fa below P_miss; linear interpolation on the segment
// from the previous point.
inline double OracleEer(const std::vector<LabeledScore> &scores, const ClassSplit &split) {
  const auto sweep = OracleSweep(scores, split);
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    const double d = sweep[i].p_fa - sweep[i].p_miss;
    if (d > 0.0) continue;
    if (d == 0.0 || i == 0) return sweep[i].p_miss;
    const double d0 = sweep[i - 1].p_fa - sweep[i - 1].p_miss;
    const double alpha = d0 / (d0 - d);
    return sweep[i - 1].p_miss + alpha * (sweep[i].p_miss - sweep[i - 1].p_miss);
  }
  return sweep.back().p_miss;
}

inline double OracleMinDcf(const std::vector<LabeledScore> &scores, const DCFParams &p,
                           const ClassSplit &split) {
  const double w_miss = p.c_miss * p.p_target, w_fa = p.c_fa * (1.0 - p.p_target);
  double best = std::numeric_limits<double>::infinity();
  for (const DetPoint &pt : OracleSweep(scores, split))
    best = std::min(best, (w_miss * pt.p_miss + w_fa * pt.p_fa) / std::min(w_miss, w_fa));
  return best;
}

inline double OracleMinADcf(const std::vector<LabeledScore> &scores, const ADCFParams &p) {
  double best = std::numeric_limits<double>::infinity();
  for (double tau : OracleThresholds(scores)) {
    const double p_miss = RejectRate(scores, {TrialLabel::kTarget}, tau);
    const double p_non = AcceptRate(scores, {TrialLabel::kNontarget}, tau);
    const double p_spf = AcceptRate(scores, {TrialLabel::kSpoof}, tau);
    const double cost = (p.c_miss * p.pi_target * p_miss + p.c_fa_nontarget * p.pi_nontarget * p_non +
                         p.c_fa_spoof * p.pi_spoof * p_spf) /
                        std::min(p.c_miss * p.pi_target,
                                 p.c_fa_nontarget * p.pi_nontarget + p.c_fa_spoof * p.pi_spoof);
    best = std::min(best, cost);
  }
  return best;
}

}  // namespace sasv::testing

#endif  // SASV_TESTS_METRIC_ORACLE_HPP_
