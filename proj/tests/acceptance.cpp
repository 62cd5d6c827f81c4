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


// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 iff all
// criteria pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "metric_oracle.hpp"
#include "sasv/calibration.hpp"
#include "sasv/checkpoint.hpp"
#include "sasv/cli.hpp"
#include "sasv/dsu.hpp"
#include "sasv/metrics.hpp"
#include "sasv/mhfa.hpp"
#include "sasv/numerics.hpp"
#include "sasv/synthgen.hpp"
#include "sasv/trainer.hpp"
#include "test_util.hpp"

using namespace sasv;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char *fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

// 1. Gradient correctness through the CLI, 20 seeds x {cm_bce, asv_aam} x
// {DSU off, DSU on with frozen noise}.
Outcome GradientCorrectness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream out, err;
  const int code = Dispatch({"gradcheck", "--seed", "0", "--seeds", "20", "--task", "all",
                             "--dsu", "both"},
                            out, err);
  const double secs = Seconds(t0);
  const std::string text = out.str();
  const auto pos = text.find("max_rel_error ");
  if (pos == std::string::npos) return {false, "no max_rel_error line; stderr: " + err.str()};
  const double worst = std::stod(text.substr(pos + 14));
  const std::size_t variants =
      static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) - 1;
  const bool pass = code == 0 && worst < 1e-4 && secs < 30.0 && variants >= 4;
  return {pass, "max relative error " + Fmt("%.3e", worst) + " over 20 seeds x " +
                    std::to_string(variants) + " variants, " + Fmt("%.2f", secs) + " s"};
}

// 2. Attention normalization, frame-permutation invariance, L=1 degeneracy.
Outcome MhfaInvariants() {
  Rng rng(2024);
  double worst_sum = 0.0, worst_perm = 0.0, worst_l1 = 0.0, worst_l1_grad = 0.0;
  for (int k = 0; k < 50; ++k) {
    MHFAConfig cfg;
    cfg.num_layers = 1 + rng.Index(4);
    cfg.input_dim = 1 + rng.Index(8);
    cfg.num_heads = 1 + rng.Index(4);
    cfg.compression_dim = 1 + rng.Index(6);
    cfg.embed_dim = 1 + rng.Index(6);
    const std::size_t frames = 1 + rng.Index(12);
    MHFAParams params = InitMHFA(cfg, rng);
    for (double &w : params.key_layer_logits) w = rng.Normal();
    for (double &w : params.value_layer_logits) w = rng.Normal();
    const LayeredFeatures x = testing::RandomFeatures(cfg.num_layers, frames, cfg.input_dim, rng);
    ForwardOptions opt;
    opt.keep_cache = true;
    const ForwardResult r = MHFAForward(x, params, cfg, opt);
    const Matrix &att = r.cache->instances[0].attention;
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
      double s = 0.0;
      for (std::size_t t = 0; t < frames; ++t) s += att(t, h);
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }

    std::vector<std::size_t> perm(frames);
    std::iota(perm.begin(), perm.end(), 0);
    rng.Shuffle(perm);
    LayeredFeatures xp = x;
    for (std::size_t l = 0; l < cfg.num_layers; ++l)
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t d = 0; d < cfg.input_dim; ++d) xp.at(l, t, d) = x.at(l, perm[t], d);
    const Embedding ep = MHFAForward(xp, params, cfg).embeddings[0];
    worst_perm = std::max(worst_perm, testing::MaxAbsDiff(ep, r.embeddings[0]));

    // L = 1: the layer weights cannot matter.
    MHFAConfig one = cfg;
    one.num_layers = 1;
    Rng init(static_cast<std::uint64_t>(k));
    MHFAParams p1 = InitMHFA(one, init);
    const LayeredFeatures x1 = testing::RandomFeatures(1, frames, cfg.input_dim, rng);
    ForwardOptions keep;
    keep.keep_cache = true;
    const ForwardResult base = MHFAForward(x1, p1, one, keep);
    const Matrix agg = LayerAggregate(x1, std::vector<double>{rng.Normal() * 5.0});
    worst_l1 = std::max(worst_l1, testing::MaxAbsDiff(agg.values(), x1.data));
    p1.key_layer_logits[0] = rng.Normal() * 10.0;
    p1.value_layer_logits[0] = rng.Normal() * 10.0;
    worst_l1 = std::max(worst_l1,
                        testing::MaxAbsDiff(MHFAForward(x1, p1, one).embeddings[0],
                                            base.embeddings[0]));
    std::vector<Embedding> g(1, Embedding(one.embed_dim));
    for (double &v : g[0]) v = rng.Normal();
    const MHFAGradients grads = MHFABackward(*base.cache, p1, g);
    worst_l1_grad = std::max({worst_l1_grad, std::abs(grads.params.key_layer_logits[0]),
                              std::abs(grads.params.value_layer_logits[0])});
  }
  const bool pass = worst_sum <= 1e-12 && worst_perm <= 1e-12 && worst_l1 <= 1e-12 &&
                    worst_l1_grad == 0.0;
  return {pass, "attention |sum-1| " + Fmt("%.1e", worst_sum) + ", permutation " +
                    Fmt("%.1e", worst_perm) + ", L=1 output " + Fmt("%.1e", worst_l1) +
                    ", L=1 logit grad " + Fmt("%.1e", worst_l1_grad) + " (50 random configs)"};
}

// 3. DSU: p = 0 identity, single-instance no-op, expectation preservation.
Outcome DsuProperties() {
  Rng data(31), rng(32);
  DSUConfig off;
  off.p = 0.0;
  bool identity = true;
  for (int k = 0; k < 100; ++k) {
    std::vector<Matrix> batch;
    const std::size_t b = 1 + rng.Index(5), t = 1 + rng.Index(7), c = 1 + rng.Index(5);
    for (std::size_t i = 0; i < b; ++i) batch.push_back(testing::RandomMatrix(t, c, data, 3.0));
    identity &= DsuPerturb(batch, off, rng) == batch;
  }

  DSUConfig on;
  on.p = 1.0;
  double worst_single = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::vector<Matrix> one{testing::RandomMatrix(1 + rng.Index(7), 3, data, 2.0)};
    const auto out = DsuPerturb(one, on, rng);
    const ColumnStats st = InstanceStats(one[0]);
    for (std::size_t t = 0; t < one[0].rows(); ++t)
      for (std::size_t c = 0; c < 3; ++c) {
        // x~ - x = -(x - mu) * eps / (sigma + eps).
        const double bound = std::abs(one[0](t, c) - st.mean[c]) * on.eps_floor /
                             (st.std[c] + on.eps_floor);
        worst_single = std::max(worst_single,
                                std::abs(out[0](t, c) - one[0](t, c)) - bound);
      }
  }

  // Two instances with matching spreads: the sigma clamp never engages, so
  // E[mu~] = mu and E[sigma~] = sigma give E[x~] = x.
  Matrix a = testing::RandomMatrix(6, 4, data);
  Matrix b = a;
  for (double &v : b.values()) v = 1.05 * v + 2.0;
  const std::vector<Matrix> batch{a, b};
  const int n = 10000;
  std::vector<Matrix> sum{Matrix(6, 4), Matrix(6, 4)}, sum2{Matrix(6, 4), Matrix(6, 4)};
  for (int k = 0; k < n; ++k) {
    const auto out = DsuPerturb(batch, on, rng);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < out[i].size(); ++j) {
        sum[i].values()[j] += out[i].values()[j];
        sum2[i].values()[j] += out[i].values()[j] * out[i].values()[j];
      }
  }
  double worst_z = 0.0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < batch[i].size(); ++j) {
      const double mean = sum[i].values()[j] / n;
      const double se = std::sqrt(std::max(sum2[i].values()[j] / n - mean * mean, 0.0) / n);
      worst_z = std::max(worst_z, std::abs(mean - batch[i].values()[j]) / se);
    }
  // 1e-12 of slack for roundoff in the rescaling.
  const bool pass = identity && worst_single <= 1e-12 && worst_z <= 3.0;
  return {pass, std::string("p=0 bit-exact ") + (identity ? "yes" : "no") +
                    ", single-instance excess over eps bound " + Fmt("%.1e", worst_single) +
                    ", worst |mean - x| " + Fmt("%.2f", worst_z) + " SE over 48 entries (10k draws)"};
}

// 4. Metrics equal the brute-force oracle and are invariant under monotone maps.
Outcome MetricOracles() {
  Rng rng(4);
  std::size_t mismatches = 0, checked = 0;
  std::vector<std::vector<LabeledScore>> sets;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 3 + rng.Index(198);
    std::vector<LabeledScore> set;
    for (std::size_t i = 0; i < n; ++i) {
      const auto label = i < 3 ? static_cast<TrialLabel>(i) : static_cast<TrialLabel>(rng.Index(3));
      double s = rng.Normal() + (label == TrialLabel::kTarget ? 1.0 : 0.0);
      if (k % 2) s = std::round(s * 4.0) / 4.0;  // force ties
      set.push_back({s, label});
    }
    mismatches += Eer(set) != testing::OracleEer(set, ClassSplit::Asv());
    mismatches += MinDcf(set).value != testing::OracleMinDcf(set, DCFParams{}, ClassSplit::Asv());
    mismatches += MinADcf(set).value != testing::OracleMinADcf(set, ADCFParams{});
    checked += 3;
    sets.push_back(std::move(set));
  }

  // Random strictly increasing maps: a x + b tanh(c (x - d)) + e.
  std::size_t variant = 0, maps = 0;
  while (maps < 10) {
    const double a = rng.Uniform(0.1, 3.0), b = rng.Uniform(0.0, 3.0), c = rng.Uniform(0.1, 3.0),
                 d = rng.Uniform(-2.0, 2.0), e = rng.Uniform(-5.0, 5.0);
    auto f = [&](double x) { return a * x + b * std::tanh(c * (x - d)) + e; };
    bool strict = true;
    std::vector<std::vector<LabeledScore>> mapped = sets;
    for (std::size_t s = 0; s < sets.size() && strict; ++s) {
      for (auto &p : mapped[s]) p.score = f(p.score);
      for (std::size_t i = 0; i < sets[s].size() && strict; ++i)
        for (std::size_t j = 0; j < sets[s].size() && strict; ++j)
          strict = (sets[s][i].score < sets[s][j].score) == (mapped[s][i].score < mapped[s][j].score);
    }
    if (!strict) continue;  // not strictly increasing at double precision
    ++maps;
    for (std::size_t s = 0; s < sets.size(); ++s) {
      variant += Eer(mapped[s]) != Eer(sets[s]);
      variant += MinDcf(mapped[s]).value != MinDcf(sets[s]).value;
      variant += MinADcf(mapped[s]).value != MinADcf(sets[s]).value;
    }
  }
  return {mismatches == 0 && variant == 0,
          std::to_string(mismatches) + "/" + std::to_string(checked) +
              " oracle mismatches on 100 sets, " + std::to_string(variant) +
              " changes under 10 monotone maps"};
}

// 5. Pre-fusion calibration + joint stage vs direct joint fusion.
Outcome StrategyEquivalence() {
  Rng rng(5);
  double worst = 0.0;
  int sets = 0;
  for (int k = 0; k < 12; ++k) {
    const auto data = testing::SyntheticSasvScores(rng, 100 + 25 * static_cast<std::size_t>(k),
                                                   1.0 + 0.3 * k, 1.5 + 0.25 * k);
    for (bool final_stage : {false, true}) {
      const PreFusionModel pre = FitPreFusion(data.asv, data.cm, data.trials, {}, final_stage);
      const JointModel joint = FitJoint(data.asv, data.cm, data.trials, {}, final_stage);
      const double a = MinADcf(JoinScores(FuseScores(data.asv, data.cm, pre), data.trials)).value;
      const double b = MinADcf(JoinScores(FuseScores(data.asv, data.cm, joint), data.trials)).value;
      worst = std::max(worst, std::abs(a - b));
    }
    ++sets;
  }
  return {worst <= 1e-6, "max |a-DCF(pre) - a-DCF(joint)| " + Fmt("%.2e", worst) + " over " +
                             std::to_string(sets) + " sets (with and without final stage)"};
}

// 6. synth -> train (CM) -> held-out EER and artifact-layer mass.
Outcome EndToEnd() {
  const auto t0 = std::chrono::steady_clock::now();
  testing::TempDir dir("acceptance-e2e");
  const std::string d = dir.path().string();
  std::ostringstream out, err;
  if (Dispatch({"synth", "--out", d}, out, err) != 0) return {false, "synth failed: " + err.str()};
  // Reference recipe (8 epochs, 2 warmup, cosine to 1e-5, AdamW wd 1e-4, DSU) at
  // desk-scale batch size and peak rate.
  if (Dispatch({"train", "--manifest", d + "/manifest.txt", "--out", d + "/cm.ckpt", "--last-out",
                d + "/cm.last.ckpt", "--task", "cm_bce", "--batch-size", "32", "--lr", "1e-2",
                "--seed", "0"},
               out, err) != 0)
    return {false, "train failed: " + err.str()};

  const Model best = ReadCheckpoint(d + "/cm.ckpt");
  const Model last = ReadCheckpoint(d + "/cm.last.ckpt");
  const TrainingCorpus corpus = TrainingCorpus::Load(ReadManifest(d + "/manifest.txt"), 4);
  std::vector<std::size_t> train, dev;
  SplitBySpeaker(corpus, TrainConfig{}.dev_fraction, train, dev);
  auto held_out_eer = [&](const Model &m) {
    std::vector<const LayeredFeatures *> ptrs;
    for (auto i : dev) ptrs.push_back(&corpus.features[i]);
    const auto emb = Embed(m, ptrs, 4);
    std::vector<LabeledScore> scores;
    for (std::size_t k = 0; k < dev.size(); ++k)
      scores.push_back({CmScore(m, emb[k]),
                        corpus.spoof[dev[k]] ? TrialLabel::kSpoof : TrialLabel::kTarget});
    return Eer(scores, ClassSplit::Cm());
  };
  const double eer = held_out_eer(best), eer_last = held_out_eer(last);

  const SynthConfig synth;
  std::vector<double> w = best.mhfa.value_layer_logits;
  const double mx = *std::max_element(w.begin(), w.end());
  double z = 0.0;
  for (double &v : w) z += (v = std::exp(v - mx));
  const double mass = w[synth.artifact_layer] / z;
  const double secs = Seconds(t0);
  const bool pass = eer < 0.05 && mass >= 0.6 && secs < 600.0;
  return {pass, "held-out CM EER " + Fmt("%.2f", 100.0 * eer) + "% (last epoch " +
                    Fmt("%.2f", 100.0 * eer_last) + "%) on " + std::to_string(dev.size()) +
                    " utterances of unseen speakers, value-stream mass on layer " +
                    std::to_string(synth.artifact_layer) + " " + Fmt("%.3f", mass) + ", " +
                    Fmt("%.1f", secs) + " s"};
}

// 7. Schedule endpoints, AdamW closed form, decoupled decay.
Outcome ScheduleOptimizer() {
  const TrainConfig cfg;
  bool ok = true;
  std::string detail;
  for (std::size_t spe : {1u, 7u, 13u, 16u}) {
    const double warm_end = LrAt(cfg.warmup_epochs * spe, spe, cfg);
    const double final_lr = LrAt(cfg.max_epochs * spe - 1, spe, cfg);
    ok &= warm_end == 5.0e-4 && final_lr == 1.0e-5 && LrAt(0, spe, cfg) == 0.0;
  }
  detail = "lr(warmup end) = " + Fmt("%.1e", LrAt(cfg.warmup_epochs * 13, 13, cfg)) +
           ", lr(final step) = " + Fmt("%.1e", LrAt(cfg.max_epochs * 13 - 1, 13, cfg));

  Rng rng(7);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> p(5), g(5);
    for (double &v : p) v = rng.Normal();
    for (double &v : g) v = rng.Normal() * std::pow(10.0, rng.Uniform(-4, 2));
    const auto p0 = p;
    std::vector<std::span<double>> params{std::span<double>(p)};
    OptimizerState st = InitOptimizer(params);
    const double lr = rng.Uniform(1e-5, 1e-2);
    AdamWUpdate(params, std::vector<std::span<const double>>{g}, st, lr, cfg);
    for (int j = 0; j < 5; ++j) {
      const double want =
          p0[j] * (1.0 - lr * cfg.weight_decay) - lr * g[j] / (std::abs(g[j]) + cfg.adam_eps);
      worst = std::max(worst, std::abs(p[j] - want) / std::max(std::abs(want), 1e-300));
    }
  }
  ok &= worst < 1e-13;

  bool decay = true;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> p(9);
    for (double &v : p) v = rng.Normal();
    const auto p0 = p;
    const std::vector<double> zero(9, 0.0);
    std::vector<std::span<double>> params{std::span<double>(p)};
    OptimizerState st = InitOptimizer(params);
    const double lr = rng.Uniform(1e-5, 1e-2);
    AdamWUpdate(params, std::vector<std::span<const double>>{zero}, st, lr, cfg);
    for (int j = 0; j < 9; ++j) decay &= p[j] == p0[j] * (1.0 - lr * cfg.weight_decay);
  }
  ok &= decay;
  return {ok, detail + ", AdamW step max rel error " + Fmt("%.1e", worst) +
                  ", zero-gradient decay exact " + (decay ? "yes" : "no")};
}

// 8. Fusion benefit on complementary ASV / CM scores.
Outcome FusionBenefit() {
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {8u, 9u, 10u}) {
    Rng rng(seed);
    const auto data = testing::SyntheticSasvScores(rng, 400, 4.0, 5.0);
    const double asv = MinADcf(JoinScores(data.asv, data.trials)).value;
    const double cm = MinADcf(JoinScores(data.cm, data.trials)).value;
    const JointModel m = FitJoint(data.asv, data.cm, data.trials);
    const double fused = MinADcf(JoinScores(FuseScores(data.asv, data.cm, m), data.trials)).value;
    ok &= fused <= asv && fused <= cm;
    if (detail.empty())
      detail = "a-DCF fused " + FormatFixed(fused, 5) + " vs ASV " + FormatFixed(asv, 5) +
               " / CM " + FormatFixed(cm, 5);
  }
  return {ok, detail + " (3 synthetic sets)"};
}

// 9. The README declares the published numbers out of scope.
Outcome NonReproducibilityNote() {
  std::ifstream f(std::string(SASV_SOURCE_DIR) + "/README.md");
  if (!f) return {false, "README.md not found"};
  std::stringstream s;
  s << f.rdbuf();
  const std::string text = s.str();
  const bool ok = text.find("2.528%") != std::string::npos &&
                  text.find("0.02747") != std::string::npos &&
                  text.find("out of scope") != std::string::npos &&
                  text.find("Tables 1") != std::string::npos;
  return {ok, ok ? "README declares Tables 1-3 values out of scope"
                 : "README lacks the non-reproducibility note"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char *, std::function<Outcome()>>> criteria = {
      {"gradient correctness", GradientCorrectness},
      {"MHFA structural invariants", MhfaInvariants},
      {"DSU properties", DsuProperties},
      {"metric oracle equivalence", MetricOracles},
      {"calibration/fusion strategy equivalence", StrategyEquivalence},
      {"end-to-end desk-scale run", EndToEnd},
      {"schedule/optimizer conformance", ScheduleOptimizer},
      {"fusion benefit", FusionBenefit},
      {"non-reproducibility note", NonReproducibilityNote},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("criterion %zu %s: %s (%s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
