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

#include "sasv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "sasv/errors.hpp"

namespace sasv {

namespace {

bool Contains(const std::vector<TrialLabel> &labels, TrialLabel l) {
  return std::find(labels.begin(), labels.end(), l) != labels.end();
}

struct Scored {
  double score;
  int cls;
};

// Sorted scores with a class index per entry, plus per-class totals.
struct SortedScores {
  std::vector<Scored> items;
  std::vector<std::size_t> totals;
};

SortedScores Sort(std::span<const LabeledScore> scores,
                  const std::vector<std::vector<TrialLabel>> &classes) {
  SortedScores s;
  s.totals.assign(classes.size(), 0);
  for (const LabeledScore &ls : scores) {
    if (!std::isfinite(ls.score)) throw NumericError("non-finite score in metric input");
    for (std::size_t c = 0; c < classes.size(); ++c) {
      if (Contains(classes[c], ls.label)) {
        s.items.push_back({ls.score, static_cast<int>(c)});
        ++s.totals[c];
        break;
      }
    }
  }
  std::sort(s.items.begin(), s.items.end(),
            [](const Scored &a, const Scored &b) { return a.score < b.score; });
  return s;
}

// Calls visit(threshold, counts_at_or_below) for -inf and every distinct
// score, ascending.
template <typename Visit>
void Sweep(const SortedScores &s, Visit &&visit) {
  std::vector<std::size_t> below(s.totals.size(), 0);
  visit(-std::numeric_limits<double>::infinity(), below);
  std::size_t i = 0;
  while (i < s.items.size()) {
    const double v = s.items[i].score;
    while (i < s.items.size() && s.items[i].score == v) ++below[s.items[i++].cls];
    visit(v, below);
  }
}

}  // namespace

std::vector<DetPoint> DetSweep(std::span<const LabeledScore> scores, const ClassSplit &split) {
  const SortedScores s = Sort(scores, {split.positive, split.negative});
  if (s.totals[0] == 0) throw Error("DET sweep: no positive-class trials");
  if (s.totals[1] == 0) throw Error("DET sweep: no negative-class trials");
  const double n_pos = static_cast<double>(s.totals[0]);
  const double n_neg = static_cast<double>(s.totals[1]);
  std::vector<DetPoint> points;
  Sweep(s, [&](double threshold, const std::vector<std::size_t> &below) {
    points.push_back({threshold, static_cast<double>(below[0]) / n_pos,
                      static_cast<double>(s.totals[1] - below[1]) / n_neg});
  });
  return points;
}

double EerFromSweep(std::span<const DetPoint> sweep) {
  if (sweep.empty()) throw Error("EER of an empty sweep");
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    const double gap = sweep[i].p_fa - sweep[i].p_miss;
    if (gap > 0.0) continue;
    if (gap == 0.0 || i == 0) return sweep[i].p_miss;
    const DetPoint &a = sweep[i - 1], &b = sweep[i];
    const double gap_a = a.p_fa - a.p_miss;
    const double alpha = gap_a / (gap_a - gap);
    return a.p_miss + alpha * (b.p_miss - a.p_miss);
  }
  return sweep.back().p_miss;
}

double Eer(std::span<const LabeledScore> scores, const ClassSplit &split) {
  const std::vector<DetPoint> sweep = DetSweep(scores, split);
  return EerFromSweep(sweep);
}

void DCFParams::Validate() const {
  if (!(p_target > 0.0 && p_target < 1.0)) throw ConfigError("minDCF p_target must be in (0, 1)");
  if (!(c_miss > 0.0 && c_fa > 0.0)) throw ConfigError("minDCF costs must be positive");
}

CostResult MinDcf(std::span<const LabeledScore> scores, const DCFParams &params,
                  const ClassSplit &split) {
  params.Validate();
  const std::vector<DetPoint> sweep = DetSweep(scores, split);
  const double w_miss = params.c_miss * params.p_target;
  const double w_fa = params.c_fa * (1.0 - params.p_target);
  const double norm = std::min(w_miss, w_fa);
  CostResult best{std::numeric_limits<double>::infinity(), 0.0};
  for (const DetPoint &p : sweep) {
    const double cost = (w_miss * p.p_miss + w_fa * p.p_fa) / norm;
    if (cost < best.value) best = {cost, p.threshold};
  }
  return best;
}

void ADCFParams::Validate() const {
  if (!(pi_target >= 0.0 && pi_nontarget >= 0.0 && pi_spoof >= 0.0))
    throw ConfigError("a-DCF priors must be non-negative");
  if (std::abs(pi_target + pi_nontarget + pi_spoof - 1.0) > 1e-9)
    throw ConfigError("a-DCF priors must sum to 1");
  if (!(c_miss > 0.0 && c_fa_nontarget > 0.0 && c_fa_spoof > 0.0))
    throw ConfigError("a-DCF costs must be positive");
}

double ADCFParams::DefaultCost() const {
  return std::min(c_miss * pi_target, c_fa_nontarget * pi_nontarget + c_fa_spoof * pi_spoof);
}

CostResult MinADcf(std::span<const LabeledScore> scores, const ADCFParams &params) {
  params.Validate();
  const SortedScores s =
      Sort(scores, {{TrialLabel::kTarget}, {TrialLabel::kNontarget}, {TrialLabel::kSpoof}});
  if (s.totals[0] == 0) throw Error("a-DCF: no target trials");
  if (s.totals[1] == 0) throw Error("a-DCF: no nontarget trials");
  if (s.totals[2] == 0) throw Error("a-DCF: no spoof trials");
  const double n_tar = static_cast<double>(s.totals[0]);
  const double n_non = static_cast<double>(s.totals[1]);
  const double n_spf = static_cast<double>(s.totals[2]);
  const double norm = params.DefaultCost();
  CostResult best{std::numeric_limits<double>::infinity(), 0.0};
  Sweep(s, [&](double threshold, const std::vector<std::size_t> &below) {
    const double p_miss = static_cast<double>(below[0]) / n_tar;
    const double p_fa_non = static_cast<double>(s.totals[1] - below[1]) / n_non;
    const double p_fa_spf = static_cast<double>(s.totals[2] - below[2]) / n_spf;
    const double cost = (params.c_miss * params.pi_target * p_miss +
                         params.c_fa_nontarget * params.pi_nontarget * p_fa_non +
                         params.c_fa_spoof * params.pi_spoof * p_fa_spf) /
                        norm;
    if (cost < best.value) best = {cost, threshold};
  });
  return best;
}

std::vector<LabeledScore> JoinScores(const ScoreSet &scores, const TrialSet &trials) {
  std::vector<LabeledScore> out;
  out.reserve(trials.size());
  for (const Trial &t : trials.trials()) {
    if (!scores.Contains(t.trial_id)) throw Error("no score for trial '" + t.trial_id + "'");
    out.push_back({scores.Get(t.trial_id), t.label});
  }
  for (const auto &[id, score] : scores.entries())
    if (trials.Find(id) == nullptr) throw Error("score for unknown trial '" + id + "'");
  return out;
}

std::string FormatFixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

}  // namespace sasv
