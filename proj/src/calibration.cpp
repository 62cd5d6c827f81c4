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

#include "sasv/calibration.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "sasv/errors.hpp"

namespace sasv {

namespace {

// log(sigmoid(x)) without overflow.
long double LogSigmoid(long double x) {
  return x >= 0.0L ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double SigmoidOf(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr std::size_t kMaxParams = 3;

// Dense solve of (A) x = b for a small symmetric positive definite A via
// Cholesky. Returns false if A is not numerically positive definite.
bool CholeskySolve(std::size_t n, std::array<double, kMaxParams * kMaxParams> a,
                   std::array<double, kMaxParams> b, std::array<double, kMaxParams> &x) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0)) return false;
    d = std::sqrt(d);
    a[j * n + j] = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / d;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
    b[i] = s / a[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k];
    b[i] = s / a[i * n + i];
  }
  x = b;
  return true;
}

struct Problem {
  std::span<const std::vector<double>> features;  // k columns, bias implied
  std::span<const int> labels;
  double prior;
  double offset;    // logit(prior)
  double w_pos;     // prior / N1
  double w_neg;     // (1 - prior) / N0
  std::size_t dim;  // k + 1
};

double Linear(const Problem &p, std::span<const double> theta, std::size_t i) {
  double z = theta[p.dim - 1];
  for (std::size_t c = 0; c + 1 < p.dim; ++c) z += theta[c] * p.features[c][i];
  return z;
}

// Extended precision: close to the optimum a Newton step gains ~g^2/H, far
// below the rounding noise of a double-precision sum over all trials, and
// the ascent test would stall the iteration short of the tolerance.
long double Objective(const Problem &p, std::span<const double> theta) {
  long double j_pos = 0.0L, j_neg = 0.0L;
  for (std::size_t i = 0; i < p.labels.size(); ++i) {
    long double z = theta[p.dim - 1];
    for (std::size_t c = 0; c + 1 < p.dim; ++c)
      z += static_cast<long double>(theta[c]) * p.features[c][i];
    z += p.offset;
    if (p.labels[i] != 0)
      j_pos += LogSigmoid(z);
    else
      j_neg += LogSigmoid(-z);
  }
  return p.w_pos * j_pos + p.w_neg * j_neg;
}

std::string Sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

void GradientHessian(const Problem &p, std::span<const double> theta,
                     std::array<double, kMaxParams> &grad,
                     std::array<double, kMaxParams * kMaxParams> &neg_hess) {
  grad.fill(0.0);
  neg_hess.fill(0.0);
  std::array<double, kMaxParams> f{};
  for (std::size_t i = 0; i < p.labels.size(); ++i) {
    for (std::size_t c = 0; c + 1 < p.dim; ++c) f[c] = p.features[c][i];
    f[p.dim - 1] = 1.0;
    const double s = SigmoidOf(Linear(p, theta, i) + p.offset);
    const bool pos = p.labels[i] != 0;
    const double w = pos ? p.w_pos : p.w_neg;
    const double r = pos ? (1.0 - s) : -s;
    const double curv = w * s * (1.0 - s);
    for (std::size_t a = 0; a < p.dim; ++a) {
      grad[a] += w * r * f[a];
      for (std::size_t b = 0; b < p.dim; ++b) neg_hess[a * p.dim + b] += curv * f[a] * f[b];
    }
  }
}

double InfNorm(const std::array<double, kMaxParams> &g, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(g[i]));
  return m;
}

std::array<double, kMaxParams> Maximize(const Problem &p, const FitOptions &opt,
                                        FitReport *report) {
  std::array<double, kMaxParams> theta{};
  FitReport local;
  FitReport &rep = report != nullptr ? *report : local;
  rep = FitReport{};
  long double j = Objective(p, theta);
  rep.objective.push_back(static_cast<double>(j));

  std::array<double, kMaxParams> grad{};
  std::array<double, kMaxParams * kMaxParams> neg_hess{};
  for (int iter = 0;; ++iter) {
    GradientHessian(p, theta, grad, neg_hess);
    rep.gradient_norm = InfNorm(grad, p.dim);
    rep.iterations = iter;
    if (rep.gradient_norm < opt.gradient_tolerance) return theta;
    if (iter >= opt.max_iterations)
      throw CalibrationError("logistic fit did not converge in " +
                             std::to_string(opt.max_iterations) + " iterations (gradient " + Sci(rep.gradient_norm) + ")");

    double trace = 0.0;
    for (std::size_t a = 0; a < p.dim; ++a) trace += neg_hess[a * p.dim + a];
    double damping = 0.0;
    bool accepted = false;
    for (int attempt = 0; attempt < 60; ++attempt) {
      auto system = neg_hess;
      for (std::size_t a = 0; a < p.dim; ++a) system[a * p.dim + a] += damping;
      std::array<double, kMaxParams> step{};
      if (CholeskySolve(p.dim, system, grad, step)) {
        std::array<double, kMaxParams> candidate = theta;
        for (std::size_t a = 0; a < p.dim; ++a) candidate[a] += step[a];
        const long double j_new = Objective(p, candidate);
        if (std::isfinite(j_new) && j_new >= j) {
          theta = candidate;
          j = j_new;
          accepted = true;
          break;
        }
      }
      damping = damping == 0.0 ? std::max(trace, 1e-300) * 1e-12 : damping * 10.0;
    }
    if (!accepted) {
      // No ascent direction left at working precision.
      if (rep.gradient_norm < 1e3 * opt.gradient_tolerance) return theta;
      throw CalibrationError("logistic fit stalled (gradient " + Sci(rep.gradient_norm) + ")");
    }
    rep.objective.push_back(static_cast<double>(j));
    for (std::size_t a = 0; a < p.dim; ++a)
      if (!(std::abs(theta[a]) < 1e8))
        throw CalibrationError("logistic fit diverges; the classes look perfectly separable");
  }
}

Problem MakeProblem(std::span<const std::vector<double>> features, std::span<const int> labels,
                    double prior) {
  if (!(prior > 0.0 && prior < 1.0)) throw ConfigError("calibration prior must be in (0, 1)");
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += l != 0 ? 1 : 0;
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw CalibrationError("calibration needs both classes (got " + std::to_string(n_pos) +
                           " positive, " + std::to_string(n_neg) + " negative)");
  for (const auto &f : features) {
    if (f.size() != labels.size()) throw ShapeError("score and label vectors differ in length");
    for (double v : f)
      if (!std::isfinite(v)) throw NumericError("non-finite score in calibration input");
  }
  return Problem{features,
                 labels,
                 prior,
                 std::log(prior / (1.0 - prior)),
                 prior / static_cast<double>(n_pos),
                 (1.0 - prior) / static_cast<double>(n_neg),
                 features.size() + 1};
}

bool IsConstant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

}  // namespace

double LogisticObjective(std::span<const std::vector<double>> features,
                         std::span<const int> labels, std::span<const double> weights,
                         double prior) {
  const Problem p = MakeProblem(features, labels, prior);
  if (weights.size() != p.dim) throw ShapeError("logistic objective: weight count");
  return Objective(p, weights);
}

AffineCalibration FitCalibration(std::span<const double> scores, std::span<const int> labels,
                                 const FitOptions &options, FitReport *report) {
  const std::vector<std::vector<double>> features = {{scores.begin(), scores.end()}};
  const Problem p = MakeProblem(features, labels, options.prior);
  if (IsConstant(scores)) throw CalibrationError("constant scores carry no discrimination");
  const auto theta = Maximize(p, options, report);
  if (!(theta[0] > 0.0))
    throw CalibrationError("fitted scale " + std::to_string(theta[0]) +
                           " is not positive; scores are anti-discriminative for these labels");
  return {theta[0], theta[1]};
}

JointFusionModel FitJointFusion(std::span<const double> asv, std::span<const double> cm,
                                std::span<const int> labels, const FitOptions &options,
                                FitReport *report) {
  if (asv.size() != cm.size() || asv.size() != labels.size())
    throw ShapeError("joint fusion inputs are not aligned");
  const std::vector<std::vector<double>> features = {{asv.begin(), asv.end()},
                                                     {cm.begin(), cm.end()}};
  const Problem p = MakeProblem(features, labels, options.prior);
  if (IsConstant(asv) && IsConstant(cm))
    throw CalibrationError("both fusion inputs are constant");
  const auto theta = Maximize(p, options, report);
  return {theta[0], theta[1], theta[2]};
}

namespace {

void CheckSameKeys(const ScoreSet &asv, const ScoreSet &cm) {
  std::vector<std::string> only_asv, only_cm;
  for (const auto &[id, s] : asv.entries())
    if (!cm.Contains(id)) only_asv.push_back(id);
  for (const auto &[id, s] : cm.entries())
    if (!asv.Contains(id)) only_cm.push_back(id);
  if (only_asv.empty() && only_cm.empty()) return;
  auto list = [](const std::vector<std::string> &ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size() && i < 10; ++i) out += (i ? "," : "") + ids[i];
    if (ids.size() > 10) out += ",...(" + std::to_string(ids.size()) + " total)";
    return out.empty() ? std::string("none") : out;
  };
  throw Error("fusion key mismatch: only in ASV: " + list(only_asv) +
              "; only in CM: " + list(only_cm));
}

template <typename Map>
ScoreSet Fuse(const ScoreSet &asv, const ScoreSet &cm, Map &&map) {
  CheckSameKeys(asv, cm);
  ScoreSet out("fused");
  for (const auto &[id, s] : asv.entries()) out.Add(id, map(s, cm.Get(id)));
  return out;
}

}  // namespace

ScoreSet FuseScores(const ScoreSet &asv, const ScoreSet &cm, const JointModel &model) {
  return Fuse(asv, cm, [&](double a, double c) {
    const double z = model.fusion.Apply(a, c);
    return model.final_stage ? model.final_stage->Apply(z) : z;
  });
}

ScoreSet FuseScores(const ScoreSet &asv, const ScoreSet &cm, const PreFusionModel &model) {
  return Fuse(asv, cm, [&](double a, double c) {
    const double z = model.fusion.Apply(model.asv.Apply(a), model.cm.Apply(c));
    return model.final_stage ? model.final_stage->Apply(z) : z;
  });
}

LabeledArrays SelectForFit(const ScoreSet &scores, const TrialSet &trials,
                           const ClassSplit &split) {
  const std::vector<LabeledScore> joined = JoinScores(scores, trials);
  auto in = [](const std::vector<TrialLabel> &set, TrialLabel l) {
    return std::find(set.begin(), set.end(), l) != set.end();
  };
  LabeledArrays out;
  for (const LabeledScore &s : joined) {
    if (in(split.positive, s.label)) {
      out.scores.push_back(s.score);
      out.labels.push_back(1);
    } else if (in(split.negative, s.label)) {
      out.scores.push_back(s.score);
      out.labels.push_back(0);
    }
  }
  return out;
}

namespace {

std::optional<AffineCalibration> FitFinalStage(const ScoreSet &fused, const TrialSet &trials,
                                               const FitOptions &options, bool wanted) {
  if (!wanted) return std::nullopt;
  const LabeledArrays d = SelectForFit(fused, trials, ClassSplit::Sasv());
  return FitCalibration(d.scores, d.labels, options);
}

JointFusionModel FitJointOn(const ScoreSet &asv, const ScoreSet &cm, const TrialSet &trials,
                            const FitOptions &options) {
  CheckSameKeys(asv, cm);
  const LabeledArrays a = SelectForFit(asv, trials, ClassSplit::Sasv());
  const LabeledArrays c = SelectForFit(cm, trials, ClassSplit::Sasv());
  return FitJointFusion(a.scores, c.scores, a.labels, options);
}

}  // namespace

PreFusionModel FitPreFusion(const ScoreSet &asv, const ScoreSet &cm, const TrialSet &trials,
                            const FitOptions &options, bool final_stage) {
  PreFusionModel m;
  const LabeledArrays a = SelectForFit(asv, trials, ClassSplit::Asv());
  const LabeledArrays c = SelectForFit(cm, trials, ClassSplit::Cm());
  m.asv = FitCalibration(a.scores, a.labels, options);
  m.cm = FitCalibration(c.scores, c.labels, options);
  ScoreSet asv_cal, cm_cal;
  for (const auto &[id, s] : asv.entries()) asv_cal.Add(id, m.asv.Apply(s));
  for (const auto &[id, s] : cm.entries()) cm_cal.Add(id, m.cm.Apply(s));
  m.fusion = FitJointOn(asv_cal, cm_cal, trials, options);
  if (final_stage) {
    PreFusionModel no_final = m;
    m.final_stage = FitFinalStage(FuseScores(asv, cm, no_final), trials, options, true);
  }
  return m;
}

JointModel FitJoint(const ScoreSet &asv, const ScoreSet &cm, const TrialSet &trials,
                    const FitOptions &options, bool final_stage) {
  JointModel m;
  m.fusion = FitJointOn(asv, cm, trials, options);
  if (final_stage) {
    JointModel no_final = m;
    m.final_stage = FitFinalStage(FuseScores(asv, cm, no_final), trials, options, true);
  }
  return m;
}

namespace {

std::vector<double> ReadNumbers(const std::filesystem::path &path, std::size_t expected) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::vector<double> values;
  std::string tok;
  while (in >> tok) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || end != tok.data() + tok.size() || !std::isfinite(v))
      throw ParseError(path.string(), 1, "bad model value '" + tok + "'");
    values.push_back(v);
  }
  if (values.size() != expected)
    throw ParseError(path.string(), 1,
                     "expected " + std::to_string(expected) + " values, got " +
                         std::to_string(values.size()));
  return values;
}

void WriteNumbers(const std::filesystem::path &path, std::span<const double> values) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  char buf[64];
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto [end, ec] =
        std::to_chars(buf, buf + sizeof(buf), values[i], std::chars_format::general, 17);
    (void)ec;
    out << (i ? " " : "") << std::string_view(buf, static_cast<std::size_t>(end - buf));
  }
  out << '\n';
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace

void WriteAffine(const std::filesystem::path &path, const AffineCalibration &c) {
  const double v[] = {c.scale, c.bias};
  WriteNumbers(path, v);
}

AffineCalibration ReadAffine(const std::filesystem::path &path) {
  const auto v = ReadNumbers(path, 2);
  return {v[0], v[1]};
}

void WriteJoint(const std::filesystem::path &path, const JointFusionModel &m) {
  const double v[] = {m.scale_asv, m.scale_cm, m.bias};
  WriteNumbers(path, v);
}

JointFusionModel ReadJoint(const std::filesystem::path &path) {
  const auto v = ReadNumbers(path, 3);
  return {v[0], v[1], v[2]};
}

}  // namespace sasv
