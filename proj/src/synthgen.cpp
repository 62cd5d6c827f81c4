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

#include "sasv/synthgen.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sasv/errors.hpp"
#include "sasv/parallel.hpp"

namespace sasv {

void SynthConfig::Validate() const {
  if (num_speakers == 0 || utts_per_speaker == 0 || num_layers == 0 || num_frames == 0 || dim == 0)
    throw ConfigError("synth counts must all be >= 1");
  if (!(spoof_fraction >= 0.0 && spoof_fraction <= 1.0))
    throw ConfigError("spoof_fraction must be in [0, 1]");
  if (!(speaker_scale >= 0.0) || !(spoof_artifact_scale >= 0.0) || !(noise_scale >= 0.0))
    throw ConfigError("synth scales must be non-negative");
  if (artifact_layer >= num_layers)
    throw ConfigError("artifact_layer " + std::to_string(artifact_layer) + " >= num_layers " +
                      std::to_string(num_layers));
}

std::size_t SynthConfig::num_spoofed() const {
  return static_cast<std::size_t>(std::llround(spoof_fraction * static_cast<double>(total_utterances())));
}

std::filesystem::path Manifest::Resolve(const ManifestEntry &e) const {
  const std::filesystem::path p(e.path);
  return p.is_absolute() ? p : base_dir / p;
}

Manifest ReadManifest(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    ManifestEntry e;
    std::string kind, extra;
    if (!(fields >> e.utt_id)) continue;
    if (e.utt_id.front() == '#') continue;
    if (!(fields >> e.speaker_id >> kind >> e.path) || (fields >> extra))
      throw ParseError(path.string(), line_no, "expected 'utt_id speaker_id kind path'");
    if (kind == "bonafide")
      e.spoof = false;
    else if (kind == "spoof")
      e.spoof = true;
    else
      throw ParseError(path.string(), line_no, "kind must be bonafide or spoof, got '" + kind + "'");
    m.entries.push_back(std::move(e));
  }
  return m;
}

void WriteManifest(const std::filesystem::path &path, const Manifest &manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  for (const ManifestEntry &e : manifest.entries)
    out << e.utt_id << ' ' << e.speaker_id << ' ' << (e.spoof ? "spoof" : "bonafide") << ' '
        << e.path << '\n';
  if (!out) throw IoError(path.string(), "write failed");
}

namespace {

// Random direction with per-entry RMS `scale`.
std::vector<double> Direction(Rng &rng, std::size_t dim, double scale) {
  std::vector<double> v(dim);
  double norm = 0.0;
  for (double &x : v) {
    x = rng.Normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  const double k = norm > 0.0 ? scale * std::sqrt(static_cast<double>(dim)) / norm : 0.0;
  for (double &x : v) x *= k;
  return v;
}

}  // namespace

SynthCorpus::SynthCorpus(const SynthConfig &cfg) : cfg_(cfg) {
  cfg_.Validate();
  Rng rng = Rng::Derive(cfg_.seed, 0);
  layer_base_ = Matrix(cfg_.num_layers, cfg_.dim);
  for (double &v : layer_base_.values()) v = rng.Normal();
  artifact_ = Direction(rng, cfg_.dim, cfg_.spoof_artifact_scale);
  speakers_ = Matrix(cfg_.num_speakers, cfg_.dim);
  for (std::size_t s = 0; s < cfg_.num_speakers; ++s) {
    const auto d = Direction(rng, cfg_.dim, cfg_.speaker_scale);
    std::copy(d.begin(), d.end(), speakers_.row(s).begin());
  }
  // Interleave (k, speaker) so spoofs spread evenly: the last num_spoofed
  // positions in k-major order are spoofed.
  const std::size_t total = cfg_.total_utterances(), n_spoof = cfg_.num_spoofed();
  spoof_.assign(total, false);
  for (std::size_t k = 0; k < cfg_.utts_per_speaker; ++k)
    for (std::size_t s = 0; s < cfg_.num_speakers; ++s) {
      const std::size_t order = k * cfg_.num_speakers + s;
      if (order >= total - n_spoof) spoof_[s * cfg_.utts_per_speaker + k] = true;
    }
}

std::string SynthCorpus::UttId(std::size_t index) const {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "spk%04zu-utt%04zu", SpeakerOf(index),
                index % cfg_.utts_per_speaker);
  return buf;
}

std::string SynthCorpus::SpeakerId(std::size_t speaker) const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "spk%04zu", speaker);
  return buf;
}

LayeredFeatures SynthCorpus::Utterance(std::size_t index) const {
  if (index >= size()) throw ConfigError("utterance index out of range");
  Rng rng = Rng::Derive(cfg_.seed, index + 1);
  const std::size_t speaker = SpeakerOf(index);
  LayeredFeatures x = LayeredFeatures::Zeros(static_cast<std::uint32_t>(cfg_.num_layers),
                                             static_cast<std::uint32_t>(cfg_.num_frames),
                                             static_cast<std::uint32_t>(cfg_.dim));
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    const bool artifact = spoof_[index] && l == cfg_.artifact_layer;
    for (std::size_t t = 0; t < cfg_.num_frames; ++t)
      for (std::size_t d = 0; d < cfg_.dim; ++d) {
        double v = layer_base_(l, d) + speakers_(speaker, d);
        if (artifact) v += artifact_[d];
        if (cfg_.noise_scale > 0.0) v += cfg_.noise_scale * rng.Normal();
        x.at(l, t, d) = v;
      }
  }
  return x;
}

TrialSet SynthCorpus::Trials() const {
  constexpr std::size_t kPerClass = 4;
  const std::size_t speakers = cfg_.num_speakers;
  std::vector<std::vector<std::size_t>> bonafide(speakers), spoofed(speakers);
  for (std::size_t i = 0; i < size(); ++i)
    (spoof_[i] ? spoofed : bonafide)[SpeakerOf(i)].push_back(i);

  TrialSet trials;
  std::size_t next = 0;
  auto add = [&](std::size_t enroll, std::size_t test, TrialLabel label) {
    char id[32];
    std::snprintf(id, sizeof(id), "tr%07zu", next++);
    trials.Add({id, UttId(enroll), UttId(test), label});
  };
  for (std::size_t s = 0; s < speakers; ++s) {
    if (bonafide[s].empty()) continue;
    const std::size_t enroll = bonafide[s].front();
    for (std::size_t k = 1; k < bonafide[s].size() && k <= kPerClass; ++k)
      add(enroll, bonafide[s][k], TrialLabel::kTarget);
    for (std::size_t k = 1; k <= kPerClass && k < speakers; ++k) {
      const auto &other = bonafide[(s + k) % speakers];
      if (!other.empty()) add(enroll, other[other.size() > 1 ? 1 : 0], TrialLabel::kNontarget);
    }
    for (std::size_t k = 0; k < spoofed[s].size() && k < kPerClass; ++k)
      add(enroll, spoofed[s][k], TrialLabel::kSpoof);
  }
  return trials;
}

SynthOutput WriteSynthCorpus(const SynthConfig &cfg, const std::filesystem::path &out_dir,
                             std::size_t threads) {
  const SynthCorpus corpus(cfg);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "feats", ec);
  if (ec) throw IoError((out_dir / "feats").string(), "cannot create directory: " + ec.message());

  SynthOutput out;
  out.manifest.base_dir = out_dir;
  out.manifest.entries.resize(corpus.size());
  ParallelFor(corpus.size(), threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      ManifestEntry &e = out.manifest.entries[i];
      e.utt_id = corpus.UttId(i);
      e.speaker_id = corpus.SpeakerId(corpus.SpeakerOf(i));
      e.spoof = corpus.IsSpoof(i);
      e.path = "feats/" + e.utt_id + ".lft";
      WriteFeatures(out_dir / e.path, corpus.Utterance(i));
    }
  });
  out.trials = corpus.Trials();
  out.manifest_path = out_dir / "manifest.txt";
  out.trials_path = out_dir / "trials.txt";
  WriteManifest(out.manifest_path, out.manifest);
  WriteTrials(out.trials_path, out.trials);
  return out;
}

}  // namespace sasv
