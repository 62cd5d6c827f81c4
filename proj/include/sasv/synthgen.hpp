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

#ifndef SASV_SYNTHGEN_HPP_
#define SASV_SYNTHGEN_HPP_

// Deterministic synthetic layered-feature corpora. Every utterance is
//
//   X(l, t, :) = base_l + speaker_s + [spoof and l == artifact_layer] artifact
//                + noise_scale * N(0, I)
//
// base_l ~ N(0, I) per layer, speaker_s a random direction scaled to RMS
// speaker_scale, artifact a random direction scaled to RMS
// spoof_artifact_scale. Spoofed utterances keep the speaker term, so ASV
// alone cannot reject them. Corpus-level draws come from Rng::Derive(seed, 0);
// utterance i draws its noise from Rng::Derive(seed, i + 1).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sasv/numerics.hpp"
#include "sasv/protocol_io.hpp"

namespace sasv {

struct SynthConfig {
  std::size_t num_speakers = 40;
  std::size_t utts_per_speaker = 50;
  double spoof_fraction = 0.5;
  std::size_t num_layers = 5;
  std::size_t num_frames = 16;
  std::size_t dim = 32;
  double speaker_scale = 1.0;
  double spoof_artifact_scale = 1.5;
  double noise_scale = 1.0;
  std::size_t artifact_layer = 2;
  std::uint64_t seed = 0;

  // Throws ConfigError on zero counts, out-of-range fractions or scales, or
  // an artifact layer >= num_layers.
  void Validate() const;
  std::size_t total_utterances() const { return num_speakers * utts_per_speaker; }
  std::size_t num_spoofed() const;
};

struct ManifestEntry {
  std::string utt_id;
  std::string speaker_id;
  bool spoof = false;
  std::string path;  // as written in the manifest; relative to its directory

  bool operator==(const ManifestEntry &) const = default;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;  // directory relative paths resolve against

  std::filesystem::path Resolve(const ManifestEntry &e) const;
};

// "utt_id speaker_id {bonafide|spoof} path" per line.
Manifest ReadManifest(const std::filesystem::path &path);
void WriteManifest(const std::filesystem::path &path, const Manifest &manifest);

// In-memory generator; the file writer below is a thin loop over it.
class SynthCorpus {
 public:
  explicit SynthCorpus(const SynthConfig &cfg);

  const SynthConfig &config() const { return cfg_; }
  std::size_t size() const { return cfg_.total_utterances(); }

  // Utterance index = speaker * utts_per_speaker + k. The last utterances
  // of every speaker are the spoofed ones, spread evenly across speakers.
  std::size_t SpeakerOf(std::size_t index) const { return index / cfg_.utts_per_speaker; }
  bool IsSpoof(std::size_t index) const { return spoof_[index]; }
  std::string UttId(std::size_t index) const;
  std::string SpeakerId(std::size_t speaker) const;

  LayeredFeatures Utterance(std::size_t index) const;

  // Enrollment / test trials over all three label classes.
  TrialSet Trials() const;

 private:
  SynthConfig cfg_;
  Matrix layer_base_;             // L x D
  std::vector<double> artifact_;  // D
  Matrix speakers_;               // S x D
  std::vector<bool> spoof_;
};

struct SynthOutput {
  Manifest manifest;
  TrialSet trials;
  std::filesystem::path manifest_path;
  std::filesystem::path trials_path;
};

// Writes out_dir/manifest.txt, out_dir/trials.txt and out_dir/feats/*.lft.
SynthOutput WriteSynthCorpus(const SynthConfig &cfg, const std::filesystem::path &out_dir,
                             std::size_t threads = 1);

}  // namespace sasv

#endif  // SASV_SYNTHGEN_HPP_
