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

#include "sasv/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <unordered_map>

#include "CLI11.hpp"
#include "json.hpp"
#include "sasv/calibration.hpp"
#include "sasv/checkpoint.hpp"
#include "sasv/errors.hpp"
#include "sasv/losses.hpp"
#include "sasv/metrics.hpp"
#include "sasv/parallel.hpp"
#include "sasv/protocol_io.hpp"
#include "sasv/synthgen.hpp"
#include "sasv/trainer.hpp"

namespace sasv {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

constexpr double kGradCheckThreshold = 1e-4;

std::string OneLine(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

std::string Category(const std::exception &e) {
  if (dynamic_cast<const ConfigError *>(&e)) return "config";
  if (dynamic_cast<const FormatError *>(&e)) return "format";
  if (dynamic_cast<const ParseError *>(&e)) return "parse";
  if (dynamic_cast<const IoError *>(&e)) return "io";
  if (dynamic_cast<const ShapeError *>(&e)) return "shape";
  if (dynamic_cast<const NumericError *>(&e)) return "numeric";
  if (dynamic_cast<const CalibrationError *>(&e)) return "calibration";
  if (dynamic_cast<const Error *>(&e)) return "error";
  return "internal";
}

// Written next to every output so the run can be replayed.
struct RunManifest {
  std::string subcommand;
  std::vector<std::string> args;
  std::string resolved_config;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::optional<std::uint64_t> seed;

  void Write(const fs::path &path) const {
    Json j;
    j["subcommand"] = subcommand;
    j["argv"] = args;
    j["resolved_config"] = resolved_config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["seed"] = seed ? Json(*seed) : Json(nullptr);
    j["cwd"] = fs::current_path().string();
    j["version"] = std::string(kVersion);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError(path.string(), "cannot open run manifest for writing");
    f << j.dump(2) << '\n';
    if (!f) throw IoError(path.string(), "write failed");
  }
};

fs::path ManifestPathFor(const fs::path &output) {
  return fs::path(output.string() + ".run.json");
}

std::string Sanitize(std::string s) {
  std::replace(s.begin(), s.end(), ' ', '_');
  std::replace(s.begin(), s.end(), '\t', '_');
  return s.empty() ? std::string("-") : s;
}

// Space-separated key=value pairs in a system tag.
std::map<std::string, std::string> TagFields(const std::string &tag) {
  std::map<std::string, std::string> out;
  std::istringstream in(tag);
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq != std::string::npos) out[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return out;
}

void PrintTable(std::ostream &out, const std::vector<std::string> &header,
                const std::vector<std::vector<std::string>> &rows, bool tsv) {
  if (tsv) {
    auto line = [&](const std::vector<std::string> &cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "\t" : "") << cells[i];
      out << '\n';
    };
    line(header);
    for (const auto &r : rows) line(r);
    return;
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto &r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  auto line = [&](const std::vector<std::string> &cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << "  ";
      if (i + 1 < cells.size())
        out << std::left << std::setw(static_cast<int>(width[i])) << cells[i];
      else
        out << cells[i];
    }
    out << '\n';
  };
  line(header);
  for (const auto &r : rows) line(r);
}

ClassSplit SplitFor(const std::string &task) {
  if (task == "asv") return ClassSplit::Asv();
  if (task == "cm") return ClassSplit::Cm();
  if (task == "sasv") return ClassSplit::Sasv();
  throw ConfigError("unknown task '" + task + "' (expected asv, cm or sasv)");
}

// ---- synth ----

struct SynthOptions {
  SynthConfig cfg;
  std::string out_dir;
  std::size_t threads = 1;
};

void AddSynth(CLI::App &app, SynthOptions &o) {
  app.add_option("--out", o.out_dir, "Output directory")->required();
  app.add_option("--speakers", o.cfg.num_speakers, "Number of speakers")->capture_default_str();
  app.add_option("--utts-per-speaker", o.cfg.utts_per_speaker)->capture_default_str();
  app.add_option("--spoof-fraction", o.cfg.spoof_fraction)->capture_default_str();
  app.add_option("--layers", o.cfg.num_layers)->capture_default_str();
  app.add_option("--frames", o.cfg.num_frames)->capture_default_str();
  app.add_option("--dim", o.cfg.dim)->capture_default_str();
  app.add_option("--speaker-scale", o.cfg.speaker_scale)->capture_default_str();
  app.add_option("--artifact-scale", o.cfg.spoof_artifact_scale)->capture_default_str();
  app.add_option("--noise-scale", o.cfg.noise_scale)->capture_default_str();
  app.add_option("--artifact-layer", o.cfg.artifact_layer)->capture_default_str();
  app.add_option("--seed", o.cfg.seed)->capture_default_str();
  app.add_option("--threads", o.threads)->capture_default_str();
}

int RunSynth(const SynthOptions &o, RunManifest &rm, std::ostream &out) {
  const SynthOutput r = WriteSynthCorpus(o.cfg, o.out_dir, o.threads);
  std::size_t spoofed = 0;
  for (const auto &e : r.manifest.entries) spoofed += e.spoof ? 1 : 0;
  out << "utterances " << r.manifest.entries.size() << "\nspoofed " << spoofed << "\ntrials "
      << r.trials.size() << "\nmanifest " << r.manifest_path.string() << "\ntrials_file "
      << r.trials_path.string() << '\n';
  rm.outputs = {r.manifest_path.string(), r.trials_path.string()};
  rm.seed = o.cfg.seed;
  rm.Write(fs::path(o.out_dir) / "run.json");
  return 0;
}

// ---- train ----

struct TrainOptions {
  std::string manifest, trials, out, last_out, log;
  std::string task = "cm_bce";
  TrainConfig cfg;
  bool no_dsu = false;
  std::size_t heads = 32, compression_dim = 128, embed_dim = 256;
};

void AddTrain(CLI::App &app, TrainOptions &o) {
  app.add_option("--manifest", o.manifest, "Utterance manifest")->required();
  app.add_option("--trials", o.trials, "Trial list used for ASV dev EER");
  app.add_option("--out", o.out, "Best-dev checkpoint path")->required();
  app.add_option("--last-out", o.last_out, "Also write the last-epoch checkpoint");
  app.add_option("--log", o.log, "Per-epoch log (default: <out>.log)");
  app.add_option("--task", o.task, "cm_bce or asv_aam")->capture_default_str();
  app.add_option("--epochs", o.cfg.max_epochs)->capture_default_str();
  app.add_option("--batch-size", o.cfg.batch_size)->capture_default_str();
  app.add_option("--lr", o.cfg.base_lr, "Peak learning rate")->capture_default_str();
  app.add_option("--final-lr", o.cfg.final_lr)->capture_default_str();
  app.add_option("--warmup-epochs", o.cfg.warmup_epochs)->capture_default_str();
  app.add_option("--weight-decay", o.cfg.weight_decay)->capture_default_str();
  app.add_flag("--no-dsu", o.no_dsu, "Disable DSU augmentation (cm_bce)");
  app.add_option("--dsu-p", o.cfg.dsu.p)->capture_default_str();
  app.add_option("--dsu-eps", o.cfg.dsu.eps_floor)->capture_default_str();
  app.add_option("--aam-margin", o.cfg.aam.margin)->capture_default_str();
  app.add_option("--aam-scale", o.cfg.aam.scale)->capture_default_str();
  app.add_option("--heads", o.heads)->capture_default_str();
  app.add_option("--compression-dim", o.compression_dim)->capture_default_str();
  app.add_option("--embed-dim", o.embed_dim)->capture_default_str();
  app.add_option("--dev-fraction", o.cfg.dev_fraction)->capture_default_str();
  app.add_option("--seed", o.cfg.seed)->capture_default_str();
  app.add_option("--threads", o.cfg.threads)->capture_default_str();
}

int RunTrain(TrainOptions o, RunManifest &rm, std::ostream &out) {
  o.cfg.task = ParseTask(o.task);
  o.cfg.use_dsu = !o.no_dsu;
  const Manifest manifest = ReadManifest(o.manifest);
  if (manifest.entries.empty()) throw Error("manifest " + o.manifest + " is empty");
  std::optional<TrialSet> trials;
  if (!o.trials.empty()) trials = ParseTrials(o.trials);
  const TrainingCorpus corpus = TrainingCorpus::Load(manifest, o.cfg.threads);

  MHFAConfig mhfa;
  mhfa.num_layers = corpus.features.front().num_layers;
  mhfa.input_dim = corpus.features.front().dim;
  mhfa.num_heads = o.heads;
  mhfa.compression_dim = o.compression_dim;
  mhfa.embed_dim = o.embed_dim;

  const TrainResult r = Train(corpus, trials ? &*trials : nullptr, o.cfg, mhfa);
  for (const EpochLog &e : r.log)
    out << "epoch " << e.epoch << " loss " << FormatFixed(e.loss, 6) << " dev_eer "
        << FormatFixed(100.0 * e.dev_eer, 3) << " lr " << e.lr << '\n';
  out << "best_epoch " << r.best_epoch << " dev_eer " << FormatFixed(100.0 * r.best_dev_eer, 3)
      << '\n';
  out << "value_layer_mass";
  for (double v : Softmax(r.best.mhfa.value_layer_logits)) out << ' ' << FormatFixed(v, 4);
  out << "\nkey_layer_mass";
  for (double v : Softmax(r.best.mhfa.key_layer_logits)) out << ' ' << FormatFixed(v, 4);
  out << '\n';

  WriteCheckpoint(o.out, r.best);
  rm.outputs.push_back(o.out);
  if (!o.last_out.empty()) {
    WriteCheckpoint(o.last_out, r.last);
    rm.outputs.push_back(o.last_out);
  }
  const std::string log = o.log.empty() ? o.out + ".log" : o.log;
  WriteTrainLog(log, r.log);
  rm.outputs.push_back(log);
  rm.inputs = {o.manifest};
  if (!o.trials.empty()) rm.inputs.push_back(o.trials);
  rm.seed = o.cfg.seed;
  rm.Write(ManifestPathFor(o.out));
  return 0;
}

// ---- score ----

struct ScoreOptions {
  std::string model, manifest, trials, out, cohort, system;
  std::size_t top_k = 200;
  std::size_t threads = 1;
};

void AddScore(CLI::App &app, ScoreOptions &o) {
  app.add_option("--model", o.model, "Checkpoint")->required();
  app.add_option("--manifest", o.manifest, "Manifest covering every trial utterance")->required();
  app.add_option("--trials", o.trials, "Trial list")->required();
  app.add_option("--out", o.out, "Score file")->required();
  app.add_option("--snorm-cohort", o.cohort, "Cohort manifest for adaptive s-norm (ASV)");
  app.add_option("--snorm-topk", o.top_k)->capture_default_str();
  app.add_option("--system", o.system, "System tag written to the score file");
  app.add_option("--threads", o.threads)->capture_default_str();
}

std::vector<Embedding> EmbedManifest(const Model &model, const Manifest &manifest,
                                     std::size_t threads) {
  const TrainingCorpus corpus = TrainingCorpus::Load(manifest, threads);
  std::vector<const LayeredFeatures *> ptrs;
  for (const auto &f : corpus.features) ptrs.push_back(&f);
  return Embed(model, ptrs, threads);
}

int RunScore(const ScoreOptions &o, RunManifest &rm, std::ostream &out) {
  const Model model = ReadCheckpoint(o.model);
  const Manifest manifest = ReadManifest(o.manifest);
  const TrialSet trials = ParseTrials(o.trials);
  if (model.task == Task::kNone) throw ConfigError("checkpoint " + o.model + " has no task head");
  if (model.task == Task::kCmBce && !o.cohort.empty())
    throw ConfigError("s-norm applies to ASV scoring only");

  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    pos.emplace(manifest.entries[i].utt_id, i);
  auto lookup = [&](const Trial &t, const std::string &id) {
    auto it = pos.find(id);
    if (it == pos.end())
      throw Error("trial " + t.trial_id + " references utterance '" + id +
                  "' missing from " + o.manifest);
    return it->second;
  };
  const std::vector<Embedding> emb = EmbedManifest(model, manifest, o.threads);

  std::optional<CohortEmbeddings> cohort;
  if (!o.cohort.empty()) {
    cohort.emplace();
    cohort->embeddings = EmbedManifest(model, ReadManifest(o.cohort), o.threads);
    cohort->top_k = o.top_k;
  }

  const std::string tag =
      o.system.empty() ? std::string(ToString(model.task)) + ":" + fs::path(o.model).stem().string()
                       : o.system;
  ScoreSet scores(Sanitize(tag));
  for (const Trial &t : trials.trials()) {
    const std::size_t test = lookup(t, t.test_id);
    double s;
    if (model.task == Task::kCmBce) {
      s = CmScore(model, emb[test]);
    } else {
      const std::size_t enroll = lookup(t, t.enroll_id);
      s = cohort ? SNormCosineScore(emb[enroll], emb[test], *cohort)
                 : CosineScore(emb[enroll], emb[test]);
    }
    scores.Add(t.trial_id, s);
  }
  WriteScores(o.out, scores);
  out << "scored " << scores.size() << " trials -> " << o.out << '\n';
  rm.inputs = {o.model, o.manifest, o.trials};
  if (!o.cohort.empty()) rm.inputs.push_back(o.cohort);
  rm.outputs = {o.out};
  rm.Write(ManifestPathFor(o.out));
  return 0;
}

// ---- calibrate ----

struct CalibrateOptions {
  std::string scores, trials, system = "asv", out, apply_out;
  FitOptions fit;
};

void AddCalibrate(CLI::App &app, CalibrateOptions &o) {
  app.add_option("--scores", o.scores, "Score file")->required();
  app.add_option("--trials", o.trials, "Labelled trial list")->required();
  app.add_option("--system", o.system, "asv (target vs nontarget), cm (bona fide vs spoof) "
                                       "or sasv (target vs rest)")
      ->capture_default_str();
  app.add_option("--prior", o.fit.prior, "Effective prior of the positive class")
      ->capture_default_str();
  app.add_option("--out", o.out, "Model file 'a b'")->required();
  app.add_option("--apply-out", o.apply_out, "Also write calibrated scores");
}

int RunCalibrate(const CalibrateOptions &o, RunManifest &rm, std::ostream &out) {
  const ScoreSet scores = ReadScores(o.scores);
  const TrialSet trials = ParseTrials(o.trials);
  const LabeledArrays d = SelectForFit(scores, trials, SplitFor(o.system));
  FitReport report;
  const AffineCalibration c = FitCalibration(d.scores, d.labels, o.fit, &report);
  WriteAffine(o.out, c);
  out << "scale " << c.scale << "\nbias " << c.bias << "\niterations " << report.iterations
      << '\n';
  rm.inputs = {o.scores, o.trials};
  rm.outputs = {o.out};
  if (!o.apply_out.empty()) {
    ScoreSet cal(scores.system_tag());
    for (const auto &[id, s] : scores.entries()) cal.Add(id, c.Apply(s));
    WriteScores(o.apply_out, cal);
    rm.outputs.push_back(o.apply_out);
  }
  rm.Write(ManifestPathFor(o.out));
  return 0;
}

// ---- fuse ----

struct FuseOptions {
  std::string asv, cm, trials, out, model_out;
  std::string strategy = "joint";
  std::string cal_set = "trials";
  bool final_stage = false;
  FitOptions fit;
};

void AddFuse(CLI::App &app, FuseOptions &o) {
  app.add_option("--asv", o.asv, "ASV score file")->required();
  app.add_option("--cm", o.cm, "CM score file")->required();
  app.add_option("--trials", o.trials, "Labelled trials used for fitting")->required();
  app.add_option("--strategy", o.strategy, "pre: calibrate each system, then fuse; "
                                           "joint: one logistic fusion over raw scores")
      ->check(CLI::IsMember({"pre", "joint"}))
      ->capture_default_str();
  app.add_flag("--final-calibration", o.final_stage, "Append an affine stage after fusion");
  app.add_option("--prior", o.fit.prior)->capture_default_str();
  app.add_option("--cal-set", o.cal_set, "Name of the fitting data, reported by eval")
      ->capture_default_str();
  app.add_option("--out", o.out, "Fused score file")->required();
  app.add_option("--model-out", o.model_out, "Write the fitted model files under this prefix");
}

int RunFuse(const FuseOptions &o, RunManifest &rm, std::ostream &out) {
  const ScoreSet asv = ReadScores(o.asv), cm = ReadScores(o.cm);
  const TrialSet trials = ParseTrials(o.trials);
  ScoreSet fused;
  JointFusionModel joint;
  std::optional<AffineCalibration> final_stage, asv_cal, cm_cal;
  if (o.strategy == "pre") {
    const PreFusionModel m = FitPreFusion(asv, cm, trials, o.fit, o.final_stage);
    fused = FuseScores(asv, cm, m);
    joint = m.fusion;
    final_stage = m.final_stage;
    asv_cal = m.asv;
    cm_cal = m.cm;
  } else {
    const JointModel m = FitJoint(asv, cm, trials, o.fit, o.final_stage);
    fused = FuseScores(asv, cm, m);
    joint = m.fusion;
    final_stage = m.final_stage;
  }
  const std::string cal = Sanitize(o.cal_set);
  fused.set_system_tag("cm=" + Sanitize(cm.system_tag()) + " cm_cal=" + (cm_cal ? cal : "no") +
                       " asv=" + Sanitize(asv.system_tag()) +
                       " asv_cal=" + (asv_cal ? cal : "no") + " fusion=" + cal +
                       " strategy=" + o.strategy);
  WriteScores(o.out, fused);
  rm.inputs = {o.asv, o.cm, o.trials};
  rm.outputs = {o.out};
  if (asv_cal)
    out << "asv_calibration " << asv_cal->scale << ' ' << asv_cal->bias << "\ncm_calibration "
        << cm_cal->scale << ' ' << cm_cal->bias << '\n';
  out << "fusion " << joint.scale_asv << ' ' << joint.scale_cm << ' ' << joint.bias << '\n';
  if (final_stage) out << "final_calibration " << final_stage->scale << ' ' << final_stage->bias << '\n';
  if (!o.model_out.empty()) {
    const std::string p = o.model_out;
    WriteJoint(p + ".fusion", joint);
    rm.outputs.push_back(p + ".fusion");
    if (asv_cal) {
      WriteAffine(p + ".asv", *asv_cal);
      WriteAffine(p + ".cm", *cm_cal);
      rm.outputs.push_back(p + ".asv");
      rm.outputs.push_back(p + ".cm");
    }
    if (final_stage) {
      WriteAffine(p + ".final", *final_stage);
      rm.outputs.push_back(p + ".final");
    }
  }
  rm.Write(ManifestPathFor(o.out));
  return 0;
}

// ---- eval ----

struct EvalOptions {
  std::string scores, trials, out, system;
  std::vector<std::string> metrics{"eer", "mindcf"};
  std::string task = "asv";
  std::string format = "table";
  DCFParams dcf;
  ADCFParams adcf;
};

void AddEval(CLI::App &app, EvalOptions &o) {
  app.add_option("--scores", o.scores, "Score file")->required();
  app.add_option("--trials", o.trials, "Labelled trial list")->required();
  app.add_option("--metric", o.metrics, "eer, mindcf and/or adcf")
      ->check(CLI::IsMember({"eer", "mindcf", "adcf"}))
      ->capture_default_str();
  app.add_option("--task", o.task, "Class split for eer/mindcf: asv, cm or sasv")
      ->check(CLI::IsMember({"asv", "cm", "sasv"}))
      ->capture_default_str();
  app.add_option("--format", o.format)->check(CLI::IsMember({"table", "tsv"}))->capture_default_str();
  app.add_option("--system", o.system, "Row label (default: the score file's system tag)");
  app.add_option("--p-target", o.dcf.p_target)->capture_default_str();
  app.add_option("--c-miss", o.dcf.c_miss)->capture_default_str();
  app.add_option("--c-fa", o.dcf.c_fa)->capture_default_str();
  app.add_option("--adcf-pi-tar", o.adcf.pi_target)->capture_default_str();
  app.add_option("--adcf-pi-non", o.adcf.pi_nontarget)->capture_default_str();
  app.add_option("--adcf-pi-spf", o.adcf.pi_spoof)->capture_default_str();
  app.add_option("--adcf-c-miss", o.adcf.c_miss)->capture_default_str();
  app.add_option("--adcf-c-fa-non", o.adcf.c_fa_nontarget)->capture_default_str();
  app.add_option("--adcf-c-fa-spf", o.adcf.c_fa_spoof)->capture_default_str();
  app.add_option("--out", o.out, "Also write the table to this file");
}

int RunEval(const EvalOptions &o, RunManifest &rm, std::ostream &out) {
  const ScoreSet scores = ReadScores(o.scores);
  const TrialSet trials = ParseTrials(o.trials);
  const std::vector<LabeledScore> joined = JoinScores(scores, trials);
  const std::string label =
      o.system.empty() ? (scores.system_tag().empty() ? std::string("-") : scores.system_tag())
                       : o.system;

  std::vector<std::string> header, row;
  const bool table3 = o.metrics.size() == 1 && o.metrics[0] == "adcf";
  if (table3) {
    // Fusion-table layout; the columns come from the fused score file's tag.
    const auto f = TagFields(label);
    auto field = [&](const char *key, const std::string &fallback) {
      auto it = f.find(key);
      return it == f.end() ? fallback : it->second;
    };
    header = {"CM model", "calibrate on", "ASV model", "calibrate on", "fusion/cali. on", "a-DCF"};
    row = {field("cm", f.empty() ? Sanitize(label) : "-"), field("cm_cal", "-"),
           field("asv", "-"), field("asv_cal", "-"), field("fusion", "-"),
           FormatFixed(MinADcf(joined, o.adcf).value, 5)};
  } else {
    header = {"System"};
    const auto f = TagFields(label);
    row = {f.count("strategy") ? "fused:" + f.at("strategy") : Sanitize(label)};
    const ClassSplit split = SplitFor(o.task);
    for (const std::string &m : o.metrics) {
      if (m == "eer") {
        header.push_back("EER(%)");
        row.push_back(FormatFixed(100.0 * Eer(joined, split), 3));
      } else if (m == "mindcf") {
        header.push_back("minDCF");
        row.push_back(FormatFixed(MinDcf(joined, o.dcf, split).value, 3));
      } else {
        header.push_back("a-DCF");
        row.push_back(FormatFixed(MinADcf(joined, o.adcf).value, 5));
      }
    }
  }
  PrintTable(out, header, {row}, o.format == "tsv");
  rm.inputs = {o.scores, o.trials};
  if (!o.out.empty()) {
    std::ofstream f(o.out, std::ios::trunc);
    if (!f) throw IoError(o.out, "cannot open for writing");
    PrintTable(f, header, {row}, o.format == "tsv");
    if (!f) throw IoError(o.out, "write failed");
    rm.outputs = {o.out};
    rm.Write(ManifestPathFor(o.out));
  }
  return 0;
}

// ---- gradcheck ----

struct GradCheckCliOptions {
  std::uint64_t seed = 0;
  std::size_t seeds = 1;
  std::string task = "all";
  std::string dsu = "both";
};

void AddGradCheck(CLI::App &app, GradCheckCliOptions &o) {
  app.add_option("--seed", o.seed, "First seed")->capture_default_str();
  app.add_option("--seeds", o.seeds, "Number of consecutive seeds")->capture_default_str();
  app.add_option("--task", o.task)->check(CLI::IsMember({"cm_bce", "asv_aam", "all"}))
      ->capture_default_str();
  app.add_option("--dsu", o.dsu)->check(CLI::IsMember({"on", "off", "both"}))->capture_default_str();
}

int RunGradCheck(const GradCheckCliOptions &o, std::ostream &out) {
  MHFAConfig cfg;
  cfg.num_layers = 2;
  cfg.input_dim = 6;
  cfg.num_heads = 2;
  cfg.compression_dim = 4;
  cfg.embed_dim = 3;
  std::vector<Task> tasks;
  if (o.task != "asv_aam") tasks.push_back(Task::kCmBce);
  if (o.task != "cm_bce") tasks.push_back(Task::kAsvAam);
  std::vector<bool> dsu;
  if (o.dsu != "on") dsu.push_back(false);
  if (o.dsu != "off") dsu.push_back(true);
  if (o.seeds == 0) throw ConfigError("--seeds must be >= 1");

  double overall = 0.0;
  for (Task task : tasks)
    for (bool d : dsu) {
      GradCheckOptions opt;
      opt.task = task;
      opt.use_dsu = d;
      GradCheckResult worst;
      for (std::size_t s = 0; s < o.seeds; ++s) {
        const GradCheckResult r = GradCheck(cfg, o.seed + s, opt);
        if (s == 0 || r.max_relative_error > worst.max_relative_error) worst = r;
      }
      overall = std::max(overall, worst.max_relative_error);
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.3e", worst.max_relative_error);
      out << ToString(task) << " dsu=" << (d ? "on" : "off") << " max_rel_error " << buf
          << " worst " << worst.worst_tensor << '[' << worst.worst_index << "]\n";
    }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", overall);
  out << "max_rel_error " << buf << '\n';
  return overall < kGradCheckThreshold ? 0 : 1;
}

int RunReplay(const std::string &path, std::ostream &out, std::ostream &err) {
  std::ifstream f(path);
  if (!f) throw IoError(path, "cannot open run manifest");
  Json j;
  try {
    j = Json::parse(f);
  } catch (const Json::exception &e) {
    throw ParseError(path, 0, e.what());
  }
  if (!j.contains("argv") || !j["argv"].is_array())
    throw ParseError(path, 0, "run manifest has no argv array");
  const auto args = j["argv"].get<std::vector<std::string>>();
  if (!args.empty() && args.front() == "replay") throw ConfigError("refusing to replay a replay");
  return Dispatch(args, out, err);
}

}  // namespace

int Dispatch(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"sasv: speaker verification / spoofing countermeasure back-end toolkit", "sasv"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  SynthOptions synth;
  TrainOptions train;
  ScoreOptions score;
  CalibrateOptions calibrate;
  FuseOptions fuse;
  EvalOptions eval;
  GradCheckCliOptions gradcheck;
  std::string replay_path;
  synth.threads = DefaultThreadCount();
  train.cfg.threads = DefaultThreadCount();
  score.threads = DefaultThreadCount();

  auto *c_synth = app.add_subcommand("synth", "Generate a synthetic layered-feature corpus");
  AddSynth(*c_synth, synth);
  auto *c_train = app.add_subcommand("train", "Train an MHFA back-end (cm_bce or asv_aam)");
  AddTrain(*c_train, train);
  auto *c_score = app.add_subcommand("score", "Score trials with a trained checkpoint");
  AddScore(*c_score, score);
  auto *c_cal = app.add_subcommand("calibrate", "Fit an affine logistic calibration");
  AddCalibrate(*c_cal, calibrate);
  auto *c_fuse = app.add_subcommand("fuse", "Fuse ASV and CM scores");
  AddFuse(*c_fuse, fuse);
  auto *c_eval = app.add_subcommand("eval", "EER / minDCF / a-DCF of a score file");
  AddEval(*c_eval, eval);
  auto *c_grad = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  AddGradCheck(*c_grad, gradcheck);
  auto *c_replay = app.add_subcommand("replay", "Re-run a command from its .run.json");
  c_replay->add_option("manifest", replay_path, "Run manifest")->required();

  if (!args.empty() && !args.front().empty() && args.front().front() != '-') {
    const auto subs = app.get_subcommands([&](CLI::App *a) { return a->get_name() == args.front(); });
    if (subs.empty()) {
      err << "error: usage: unknown subcommand '" << OneLine(args.front()) << "'\n" << app.help();
      return 2;
    }
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp &e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion &) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError &e) {
    err << "error: usage: " << OneLine(e.what()) << '\n' << app.help();
    return 2;
  }

  try {
    RunManifest rm;
    rm.args = args;
    for (CLI::App *sub : app.get_subcommands()) {
      rm.subcommand = sub->get_name();
      rm.resolved_config = sub->config_to_str(true, false);
    }
    if (c_synth->parsed()) return RunSynth(synth, rm, out);
    if (c_train->parsed()) return RunTrain(train, rm, out);
    if (c_score->parsed()) return RunScore(score, rm, out);
    if (c_cal->parsed()) return RunCalibrate(calibrate, rm, out);
    if (c_fuse->parsed()) return RunFuse(fuse, rm, out);
    if (c_eval->parsed()) return RunEval(eval, rm, out);
    if (c_grad->parsed()) return RunGradCheck(gradcheck, out);
    if (c_replay->parsed()) return RunReplay(replay_path, out, err);
  } catch (const std::exception &e) {
    err << "error: " << Category(e) << ": " << OneLine(e.what()) << '\n';
    return 1;
  }
  err << "error: usage: no subcommand\n" << app.help();
  return 2;
}

int Dispatch(int argc, const char *const *argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return Dispatch(args, std::cout, std::cerr);
}

}  // namespace sasv
