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

#ifndef SASV_TRAINER_HPP_
#define SASV_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sasv/checkpoint.hpp"
#include "sasv/dsu.hpp"
#include "sasv/losses.hpp"
#include "sasv/mhfa.hpp"
#include "sasv/protocol_io.hpp"
#include "sasv/synthgen.hpp"

namespace sasv {

struct TrainConfig {
  std::size_t max_epochs = 8;
  std::size_t batch_size = 128;
  double base_lr = 5.0e-4;
  double final_lr = 1.0e-5;
  std::size_t warmup_epochs = 2;
  double weight_decay = 1.0e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  Task task = Task::kCmBce;
  bool use_dsu = true;  // cm_bce only
  DSUConfig dsu;
  AAMConfig aam;
  double dev_fraction = 0.2;  // share of speakers held out for dev EER
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  // Learning-rate factor for a trainable frontend. Nothing here trains a
  // frontend, so setting it is a configuration error.
  std::optional<double> frontend_lr_factor;

  // Throws ConfigError on any invariant violation.
  void Validate() const;
};

// Linear warmup from 0 to base_lr over warmup_epochs, then per-step cosine
// decay to final_lr, reached exactly at the last step of the last epoch.
double LrAt(std::size_t step, std::size_t steps_per_epoch, const TrainConfig &cfg);

struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

OptimizerState InitOptimizer(std::span<const std::span<double>> params);

// One AdamW step: params *= (1 - lr * wd), then the bias-corrected Adam
// update. Throws ShapeError if params, grads and state disagree.
void AdamWUpdate(std::span<const std::span<double>> params,
                 std::span<const std::span<const double>> grads, OptimizerState &state, double lr,
                 const TrainConfig &cfg);

// Utterances held in memory for training and scoring.
struct TrainingCorpus {
  std::vector<LayeredFeatures> features;
  std::vector<std::string> utt_ids;
  std::vector<std::string> speaker_ids;
  std::vector<bool> spoof;

  std::size_t size() const { return features.size(); }
  static TrainingCorpus Load(const Manifest &manifest, std::size_t threads = 1);
  static TrainingCorpus FromSynth(const SynthCorpus &corpus);
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean training loss over the epoch
  double dev_eer = 0.0;
  double lr = 0.0;        // learning rate of the epoch's last step
};

struct TrainResult {
  Model best;  // lowest dev EER, latest epoch on ties
  Model last;
  std::size_t best_epoch = 0;
  double best_dev_eer = 1.0;
  std::vector<EpochLog> log;
  std::vector<double> lr_trace;     // one entry per optimizer step
  std::vector<double> step_losses;  // mean batch loss per optimizer step
  std::size_t steps_per_epoch = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> dev_indices;
};

// Fresh model: MHFA init from Rng::Derive(seed, 1), head init from
// Rng::Derive(seed, 2). num_classes is only used by asv_aam.
Model InitModel(const MHFAConfig &mhfa_cfg, Task task, std::size_t num_classes, std::uint64_t seed);

// Speaker-disjoint split: the last ceil(dev_fraction * speakers) speakers in
// order of first appearance form the dev set.
void SplitBySpeaker(const TrainingCorpus &corpus, double dev_fraction,
                    std::vector<std::size_t> &train, std::vector<std::size_t> &dev);

// Throws ConfigError / Error on inconsistent corpora before any training.
// `trials` (optional) provides the ASV dev trials; without it every
// bona fide pair of dev utterances is a trial.
TrainResult Train(const TrainingCorpus &corpus, const TrialSet *trials, const TrainConfig &cfg,
                  const MHFAConfig &mhfa_cfg);

// Eval-mode embeddings.
std::vector<Embedding> Embed(const Model &model, std::span<const LayeredFeatures *const> batch,
                             std::size_t threads = 1);

// CM logit (higher = more bona fide).
double CmScore(const Model &model, const Embedding &e);

// Dev-set EER used for checkpoint selection.
double DevEer(const Model &model, const TrainingCorpus &corpus, std::span<const std::size_t> dev,
              const TrialSet *trials, std::size_t threads = 1);

// Writes "epoch loss dev_eer lr" lines.
void WriteTrainLog(const std::filesystem::path &path, std::span<const EpochLog> log);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

struct GradCheckOptions {
  Task task = Task::kCmBce;
  bool use_dsu = false;  // frozen noise, p = 1
  std::size_t batch = 3;
  std::size_t frames = 4;
  std::size_t num_classes = 3;
  double step = 1e-5;
  // Relative error = |a - n| / max(|a|, |n|, floor).
  // Below the floor the check is absolute (floor * 1e-4): with step 1e-5 the
  // central difference of an O(30) loss carries ~1e-10 of roundoff.
  double floor = 1e-5;
};

// Central differences against analytic gradients of the batch-mean loss
// through head and MHFA, over every parameter of a random small model.
GradCheckResult GradCheck(const MHFAConfig &mhfa_cfg, std::uint64_t seed,
                          const GradCheckOptions &options = {});

}  // namespace sasv

#endif  // SASV_TRAINER_HPP_
