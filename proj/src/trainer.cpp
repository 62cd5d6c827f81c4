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

#include "sasv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <unordered_map>

#include "sasv/errors.hpp"
#include "sasv/metrics.hpp"
#include "sasv/parallel.hpp"

namespace sasv {

void TrainConfig::Validate() const {
  if (max_epochs == 0) throw ConfigError("max_epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(final_lr > 0.0 && final_lr <= base_lr))
    throw ConfigError("learning rates must satisfy 0 < final_lr <= base_lr");
  if (warmup_epochs >= max_epochs) throw ConfigError("warmup_epochs must be < max_epochs");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (task == Task::kNone) throw ConfigError("training task not set");
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0))
    throw ConfigError("dev_fraction must be in (0, 1)");
  if (frontend_lr_factor)
    throw ConfigError("frontend_lr_factor is set but there is no trainable frontend");
  dsu.Validate();
  if (task == Task::kAsvAam) aam.Validate();
}

double LrAt(std::size_t step, std::size_t steps_per_epoch, const TrainConfig &cfg) {
  const std::size_t total = cfg.max_epochs * steps_per_epoch;
  const std::size_t warm = cfg.warmup_epochs * steps_per_epoch;
  if (step < warm) return cfg.base_lr * static_cast<double>(step) / static_cast<double>(warm);
  const std::size_t last = total > 0 ? total - 1 : 0;
  if (last <= warm) return step >= last && last > 0 ? cfg.final_lr : cfg.base_lr;
  const double progress =
      std::min(1.0, static_cast<double>(step - warm) / static_cast<double>(last - warm));
  return cfg.final_lr +
         0.5 * (cfg.base_lr - cfg.final_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

OptimizerState InitOptimizer(std::span<const std::span<double>> params) {
  OptimizerState s;
  for (auto p : params) {
    s.first_moment.emplace_back(p.size(), 0.0);
    s.second_moment.emplace_back(p.size(), 0.0);
  }
  return s;
}

void AdamWUpdate(std::span<const std::span<double>> params,
                 std::span<const std::span<const double>> grads, OptimizerState &state, double lr,
                 const TrainConfig &cfg) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw ShapeError("AdamW: tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].size() != grads[i].size() || params[i].size() != state.first_moment[i].size())
      throw ShapeError("AdamW: tensor " + std::to_string(i) + " size mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = grads[i];
    auto &m = state.first_moment[i];
    auto &v = state.second_moment[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] *= decay;
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      p[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg.adam_eps);
    }
  }
}

TrainingCorpus TrainingCorpus::Load(const Manifest &manifest, std::size_t threads) {
  TrainingCorpus c;
  const std::size_t n = manifest.entries.size();
  c.features.resize(n);
  ParallelFor(n, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      c.features[i] = ReadFeatures(manifest.Resolve(manifest.entries[i]));
  });
  for (const ManifestEntry &e : manifest.entries) {
    c.utt_ids.push_back(e.utt_id);
    c.speaker_ids.push_back(e.speaker_id);
    c.spoof.push_back(e.spoof);
  }
  return c;
}

TrainingCorpus TrainingCorpus::FromSynth(const SynthCorpus &corpus) {
  TrainingCorpus c;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    c.features.push_back(corpus.Utterance(i));
    c.utt_ids.push_back(corpus.UttId(i));
    c.speaker_ids.push_back(corpus.SpeakerId(corpus.SpeakerOf(i)));
    c.spoof.push_back(corpus.IsSpoof(i));
  }
  return c;
}

Model InitModel(const MHFAConfig &mhfa_cfg, Task task, std::size_t num_classes,
                std::uint64_t seed) {
  Model m;
  m.task = task;
  m.config = mhfa_cfg;
  Rng mhfa_rng = Rng::Derive(seed, 1);
  m.mhfa = InitMHFA(mhfa_cfg, mhfa_rng);
  Rng head_rng = Rng::Derive(seed, 2);
  const std::size_t e = mhfa_cfg.embed_dim;
  if (task == Task::kCmBce) {
    m.head.weights = Matrix(1, e);
    const double bound = 1.0 / std::sqrt(static_cast<double>(e));
    for (double &v : m.head.weights.values()) v = head_rng.Uniform(-bound, bound);
    m.head.bias.assign(1, 0.0);
  } else if (task == Task::kAsvAam) {
    if (num_classes < 2) throw ConfigError("asv_aam needs at least 2 classes");
    m.head.weights = Matrix(num_classes, e);
    for (double &v : m.head.weights.values()) v = head_rng.Normal();
  }
  return m;
}

void SplitBySpeaker(const TrainingCorpus &corpus, double dev_fraction,
                    std::vector<std::size_t> &train, std::vector<std::size_t> &dev) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::size_t> rank;
  for (const std::string &s : corpus.speaker_ids)
    if (rank.emplace(s, order.size()).second) order.push_back(s);
  if (order.size() < 2) throw Error("need at least 2 speakers for a speaker-disjoint dev split");
  std::size_t n_dev = static_cast<std::size_t>(
      std::ceil(dev_fraction * static_cast<double>(order.size())));
  n_dev = std::clamp<std::size_t>(n_dev, 1, order.size() - 1);
  const std::size_t first_dev = order.size() - n_dev;
  train.clear();
  dev.clear();
  for (std::size_t i = 0; i < corpus.size(); ++i)
    (rank.at(corpus.speaker_ids[i]) >= first_dev ? dev : train).push_back(i);
}

namespace {

Model ZerosLike(const Model &m) {
  Model z;
  z.task = m.task;
  z.config = m.config;
  z.mhfa = MHFAParams::Zeros(m.config);
  z.head.weights = Matrix(m.head.weights.rows(), m.head.weights.cols());
  z.head.bias.assign(m.head.bias.size(), 0.0);
  return z;
}

// Batch-mean loss of the head on top of the MHFA forward. Fills `grad`
// (same layout as the model) when non-null.
double BatchLoss(const Model &model, std::span<const LayeredFeatures *const> batch,
                 std::span<const std::size_t> labels, const AAMConfig &aam,
                 const ForwardOptions &base_options, Model *grad) {
  ForwardOptions options = base_options;
  options.keep_cache = grad != nullptr;
  ForwardResult fwd = MHFAForwardBatch(batch, model.mhfa, model.config, options);
  const std::size_t b_size = batch.size();
  const double inv_b = 1.0 / static_cast<double>(b_size);
  const std::size_t e_dim = model.config.embed_dim;
  std::vector<Embedding> grad_e(b_size, Embedding(e_dim, 0.0));
  double loss = 0.0;
  for (std::size_t b = 0; b < b_size; ++b) {
    const Embedding &e = fwd.embeddings[b];
    if (model.task == Task::kCmBce) {
      const auto w = model.head.weights.row(0);
      double logit = model.head.bias[0];
      for (std::size_t d = 0; d < e_dim; ++d) logit += w[d] * e[d];
      const BceResult r = BceWithLogit(logit, static_cast<int>(labels[b]));
      loss += r.loss * inv_b;
      if (grad != nullptr) {
        const double g = r.grad * inv_b;
        grad->head.bias[0] += g;
        auto gw = grad->head.weights.row(0);
        for (std::size_t d = 0; d < e_dim; ++d) {
          gw[d] += g * e[d];
          grad_e[b][d] = g * w[d];
        }
      }
    } else {
      const AamResult r = AamSoftmax(e, model.head.weights, labels[b], aam);
      loss += r.loss * inv_b;
      if (grad != nullptr) {
        for (std::size_t d = 0; d < e_dim; ++d) grad_e[b][d] = r.grad_embedding[d] * inv_b;
        auto dst = grad->head.weights.values();
        auto src = r.grad_weights.values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i] * inv_b;
      }
    }
  }
  if (grad != nullptr) {
    MHFAGradients g = MHFABackward(*fwd.cache, model.mhfa, grad_e, false, options.threads);
    grad->mhfa = std::move(g.params);
  }
  return loss;
}

std::vector<const LayeredFeatures *> Gather(const TrainingCorpus &corpus,
                                            std::span<const std::size_t> idx) {
  std::vector<const LayeredFeatures *> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(&corpus.features[i]);
  return out;
}

}  // namespace

std::vector<Embedding> Embed(const Model &model, std::span<const LayeredFeatures *const> batch,
                             std::size_t threads) {
  std::vector<Embedding> out;
  constexpr std::size_t kChunk = 256;
  for (std::size_t begin = 0; begin < batch.size(); begin += kChunk) {
    const std::size_t end = std::min(batch.size(), begin + kChunk);
    ForwardOptions options;
    options.threads = threads;
    ForwardResult r = MHFAForwardBatch(batch.subspan(begin, end - begin), model.mhfa,
                                       model.config, options);
    for (auto &e : r.embeddings) out.push_back(std::move(e));
  }
  return out;
}

double CmScore(const Model &model, const Embedding &e) {
  if (model.task != Task::kCmBce || model.head.weights.rows() != 1 || model.head.bias.size() != 1)
    throw ConfigError("CM scoring needs a cm_bce model");
  const auto w = model.head.weights.row(0);
  if (e.size() != w.size()) throw ShapeError("embedding size does not match the CM head");
  double logit = model.head.bias[0];
  for (std::size_t d = 0; d < e.size(); ++d) logit += w[d] * e[d];
  return logit;
}

double DevEer(const Model &model, const TrainingCorpus &corpus, std::span<const std::size_t> dev,
              const TrialSet *trials, std::size_t threads) {
  if (model.task == Task::kCmBce) {
    const auto batch = Gather(corpus, dev);
    const auto emb = Embed(model, batch, threads);
    std::vector<LabeledScore> scores;
    for (std::size_t i = 0; i < dev.size(); ++i)
      scores.push_back({CmScore(model, emb[i]),
                        corpus.spoof[dev[i]] ? TrialLabel::kSpoof : TrialLabel::kTarget});
    return Eer(scores, ClassSplit::Cm());
  }
  std::vector<std::size_t> bona;
  for (std::size_t i : dev)
    if (!corpus.spoof[i]) bona.push_back(i);
  const auto emb = Embed(model, Gather(corpus, bona), threads);
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t k = 0; k < bona.size(); ++k) pos.emplace(corpus.utt_ids[bona[k]], k);
  std::vector<LabeledScore> scores;
  std::size_t n_tar = 0, n_non = 0;
  if (trials != nullptr) {
    for (const Trial &t : trials->trials()) {
      if (t.label != TrialLabel::kTarget && t.label != TrialLabel::kNontarget) continue;
      auto a = pos.find(t.enroll_id), b = pos.find(t.test_id);
      if (a == pos.end() || b == pos.end()) continue;
      scores.push_back({CosineScore(emb[a->second], emb[b->second]), t.label});
      (t.label == TrialLabel::kTarget ? n_tar : n_non)++;
    }
  }
  if (n_tar == 0 || n_non == 0) {
    scores.clear();
    for (std::size_t a = 0; a < bona.size(); ++a)
      for (std::size_t b = a + 1; b < bona.size(); ++b) {
        const bool same = corpus.speaker_ids[bona[a]] == corpus.speaker_ids[bona[b]];
        scores.push_back({CosineScore(emb[a], emb[b]),
                          same ? TrialLabel::kTarget : TrialLabel::kNontarget});
      }
  }
  return Eer(scores, ClassSplit::Asv());
}

TrainResult Train(const TrainingCorpus &corpus, const TrialSet *trials, const TrainConfig &cfg,
                  const MHFAConfig &mhfa_cfg) {
  cfg.Validate();
  mhfa_cfg.Validate();
  if (corpus.size() == 0) throw Error("training corpus is empty");
  if (corpus.utt_ids.size() != corpus.size() || corpus.speaker_ids.size() != corpus.size() ||
      corpus.spoof.size() != corpus.size())
    throw Error("training corpus metadata is inconsistent");
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const LayeredFeatures &x = corpus.features[i];
    if (x.num_layers != mhfa_cfg.num_layers || x.dim != mhfa_cfg.input_dim)
      throw ShapeError("utterance " + corpus.utt_ids[i] + " is " + std::to_string(x.num_layers) +
                       "x" + std::to_string(x.dim) + ", model expects " +
                       std::to_string(mhfa_cfg.num_layers) + "x" +
                       std::to_string(mhfa_cfg.input_dim));
  }

  TrainResult result;
  SplitBySpeaker(corpus, cfg.dev_fraction, result.train_indices, result.dev_indices);

  std::vector<std::size_t> train;
  std::vector<std::size_t> labels(corpus.size(), 0);
  std::size_t num_classes = 0;
  if (cfg.task == Task::kCmBce) {
    train = result.train_indices;
    std::size_t n_spoof = 0;
    for (std::size_t i : train) {
      labels[i] = corpus.spoof[i] ? 0 : 1;
      n_spoof += corpus.spoof[i] ? 1 : 0;
    }
    if (n_spoof == 0 || n_spoof == train.size())
      throw Error("cm_bce training split needs both bona fide and spoofed utterances");
    std::size_t dev_spoof = 0;
    for (std::size_t i : result.dev_indices) dev_spoof += corpus.spoof[i] ? 1 : 0;
    if (dev_spoof == 0 || dev_spoof == result.dev_indices.size())
      throw Error("cm_bce dev split needs both bona fide and spoofed utterances");
  } else {
    std::unordered_map<std::string, std::size_t> classes;
    for (std::size_t i : result.train_indices) {
      if (corpus.spoof[i]) continue;
      train.push_back(i);
      labels[i] = classes.emplace(corpus.speaker_ids[i], classes.size()).first->second;
    }
    num_classes = classes.size();
    if (num_classes < 2) throw Error("asv_aam training needs at least 2 bona fide speakers");
  }

  Model model = InitModel(mhfa_cfg, cfg.task, num_classes, cfg.seed);
  std::vector<std::span<double>> params = model.Tensors();
  OptimizerState opt = InitOptimizer(params);

  Rng shuffle_rng = Rng::Derive(cfg.seed, 3);
  Rng dsu_rng = Rng::Derive(cfg.seed, 4);
  const std::size_t spe = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  result.steps_per_epoch = spe;

  ForwardOptions fwd;
  fwd.training = true;
  fwd.threads = cfg.threads;
  if (cfg.task == Task::kCmBce && cfg.use_dsu) {
    fwd.dsu = &cfg.dsu;
    fwd.rng = &dsu_rng;
  }

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<std::size_t> order = train;
    shuffle_rng.Shuffle(order);
    double epoch_loss = 0.0, lr = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      std::vector<std::size_t> batch_labels;
      for (std::size_t i : idx) batch_labels.push_back(labels[i]);
      Model grad = ZerosLike(model);
      const double loss = BatchLoss(model, Gather(corpus, idx), batch_labels, cfg.aam, fwd, &grad);
      lr = LrAt(step, spe, cfg);
      const auto g_mut = grad.Tensors();
      const std::vector<std::span<const double>> g(g_mut.begin(), g_mut.end());
      AdamWUpdate(params, g, opt, lr, cfg);
      result.lr_trace.push_back(lr);
      result.step_losses.push_back(loss);
      epoch_loss += loss * static_cast<double>(idx.size());
    }
    const double dev_eer = DevEer(model, corpus, result.dev_indices, trials, cfg.threads);
    result.log.push_back({epoch, epoch_loss / static_cast<double>(train.size()), dev_eer, lr});
    if (result.best_epoch == 0 || dev_eer <= result.best_dev_eer) {
      result.best_epoch = epoch;
      result.best_dev_eer = dev_eer;
      result.best = model;
    }
  }
  result.last = std::move(model);
  return result;
}

void WriteTrainLog(const std::filesystem::path &path, std::span<const EpochLog> log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.precision(10);
  for (const EpochLog &e : log)
    out << e.epoch << ' ' << e.loss << ' ' << e.dev_eer << ' ' << e.lr << '\n';
  if (!out) throw IoError(path.string(), "write failed");
}

GradCheckResult GradCheck(const MHFAConfig &mhfa_cfg, std::uint64_t seed,
                          const GradCheckOptions &options) {
  mhfa_cfg.Validate();
  Rng rng = Rng::Derive(seed, 100);
  Model model = InitModel(mhfa_cfg, options.task, options.num_classes, seed);
  // Move off the symmetric initial point so every path carries gradient.
  for (double &v : model.mhfa.key_layer_logits) v = 0.5 * rng.Normal();
  for (double &v : model.mhfa.value_layer_logits) v = 0.5 * rng.Normal();
  for (double &v : model.mhfa.output_bias) v = 0.1 * rng.Normal();
  for (double &v : model.head.bias) v = 0.1 * rng.Normal();

  std::vector<LayeredFeatures> inputs;
  std::vector<std::size_t> labels;
  for (std::size_t b = 0; b < options.batch; ++b) {
    LayeredFeatures x = LayeredFeatures::Zeros(static_cast<std::uint32_t>(mhfa_cfg.num_layers),
                                               static_cast<std::uint32_t>(options.frames),
                                               static_cast<std::uint32_t>(mhfa_cfg.input_dim));
    const double offset = rng.Normal();
    const double spread = 0.5 + rng.Uniform01();
    for (double &v : x.data) v = offset + spread * rng.Normal();
    inputs.push_back(std::move(x));
    labels.push_back(options.task == Task::kCmBce ? b % 2 : rng.Index(options.num_classes));
  }
  std::vector<const LayeredFeatures *> batch;
  for (const auto &x : inputs) batch.push_back(&x);

  AAMConfig aam;
  aam.num_classes = options.num_classes;
  DSUConfig dsu_cfg;
  dsu_cfg.p = 1.0;
  DsuNoise noise;
  ForwardOptions fwd;
  fwd.training = true;
  if (options.use_dsu) {
    noise = DrawDsuNoise(options.batch, mhfa_cfg.input_dim, dsu_cfg, rng);
    fwd.dsu = &dsu_cfg;
    fwd.noise = &noise;
  }

  Model grad = ZerosLike(model);
  BatchLoss(model, batch, labels, aam, fwd, &grad);

  static const char *kHeadNames[] = {"head_weights", "head_bias"};
  GradCheckResult result;
  auto params = model.Tensors();
  const auto analytic = grad.Tensors();
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t j = 0; j < params[t].size(); ++j) {
      const double saved = params[t][j];
      params[t][j] = saved + options.step;
      const double up = BatchLoss(model, batch, labels, aam, fwd, nullptr);
      params[t][j] = saved - options.step;
      const double down = BatchLoss(model, batch, labels, aam, fwd, nullptr);
      params[t][j] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[t][j];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), options.floor});
      ++result.checked;
      if (rel > result.max_relative_error || result.checked == 1) {
        result.max_relative_error = rel;
        result.worst_tensor = t < MHFAParams::kNumTensors
                                  ? std::string(MHFAParams::kTensorNames[t])
                                  : std::string(kHeadNames[t - MHFAParams::kNumTensors]);
        result.worst_index = j;
      }
    }
  }
  return result;
}

}  // namespace sasv
