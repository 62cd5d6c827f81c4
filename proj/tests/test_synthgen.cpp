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


#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "sasv/errors.hpp"
#include "sasv/metrics.hpp"
#include "sasv/synthgen.hpp"
#include "test_util.hpp"

using namespace sasv;
using sasv::testing::TempDir;

namespace {

SynthConfig Small() {
  SynthConfig c;
  c.num_speakers = 6;
  c.utts_per_speaker = 10;
  c.num_layers = 3;
  c.num_frames = 8;
  c.dim = 8;
  c.artifact_layer = 1;
  return c;
}

std::string Slurp(const std::filesystem::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Mean energy of the artifact layer as a spoof detector (higher = spoof),
// scored as a CM: bona fide is the positive class, so negate.
double EnergyEer(const SynthConfig &cfg) {
  const SynthCorpus corpus(cfg);
  std::vector<LabeledScore> scores;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const LayeredFeatures x = corpus.Utterance(i);
    double e = 0.0;
    for (std::size_t t = 0; t < x.num_frames; ++t)
      for (std::size_t d = 0; d < x.dim; ++d) e += x.at(cfg.artifact_layer, t, d) * x.at(cfg.artifact_layer, t, d);
    scores.push_back({-e, corpus.IsSpoof(i) ? TrialLabel::kSpoof : TrialLabel::kTarget});
  }
  return Eer(scores, ClassSplit::Cm());
}

}  // namespace

TEST_CASE("default config is about 2k utterances, half spoofed") {
  const SynthConfig c;
  CHECK(c.total_utterances() == 2000);
  CHECK(c.num_spoofed() == 1000);
}

TEST_CASE("manifest counts follow the config") {
  TempDir dir("synth");
  SynthConfig c = Small();
  c.spoof_fraction = 0.35;
  const SynthOutput out = WriteSynthCorpus(c, dir.path());
  CHECK(out.manifest.entries.size() == 60);
  std::size_t spoofed = 0;
  std::set<std::string> speakers;
  for (const auto &e : out.manifest.entries) {
    spoofed += e.spoof;
    speakers.insert(e.speaker_id);
    CHECK(std::filesystem::exists(out.manifest.Resolve(e)));
  }
  CHECK(spoofed == 21);  // round(0.35 * 60)
  CHECK(speakers.size() == 6);
  const Manifest back = ReadManifest(out.manifest_path);
  CHECK(back.entries == out.manifest.entries);
}

TEST_CASE("same config and seed give byte-identical corpora") {
  TempDir a("synth"), b("synth");
  const SynthConfig c = Small();
  const SynthOutput oa = WriteSynthCorpus(c, a.path(), 1);
  const SynthOutput ob = WriteSynthCorpus(c, b.path(), 3);
  CHECK(Slurp(oa.manifest_path) == Slurp(ob.manifest_path));
  CHECK(Slurp(oa.trials_path) == Slurp(ob.trials_path));
  for (std::size_t i = 0; i < oa.manifest.entries.size(); ++i)
    CHECK(Slurp(oa.manifest.Resolve(oa.manifest.entries[i])) ==
          Slurp(ob.manifest.Resolve(ob.manifest.entries[i])));
  SynthConfig other = c;
  other.seed = 1;
  CHECK(!(SynthCorpus(other).Utterance(0) == SynthCorpus(c).Utterance(0)));
}

TEST_CASE("degenerate config makes every utterance identical") {
  SynthConfig c = Small();
  c.noise_scale = 0.0;
  c.spoof_artifact_scale = 0.0;
  c.speaker_scale = 0.0;
  const SynthCorpus corpus(c);
  const LayeredFeatures first = corpus.Utterance(0);
  for (std::size_t i = 1; i < corpus.size(); ++i) CHECK(corpus.Utterance(i) == first);
}

TEST_CASE("the artifact only touches the artifact layer of spoofed utterances") {
  SynthConfig c = Small();
  c.noise_scale = 0.0;
  c.speaker_scale = 0.0;
  const SynthCorpus corpus(c);
  std::size_t bona = 0, spoof = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) (corpus.IsSpoof(i) ? spoof : bona) = i;
  const LayeredFeatures x = corpus.Utterance(bona), y = corpus.Utterance(spoof);
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const bool same = x.Layer(l) == y.Layer(l);
    CHECK(same == (l != c.artifact_layer));
  }
}

TEST_CASE("a strong artifact is separable by artifact-layer energy") {
  SynthConfig c;
  c.spoof_artifact_scale = 5.0;
  CHECK(EnergyEer(c) < 0.01);
}

TEST_CASE("separability is monotone in the artifact scale") {
  SynthConfig c = Small();
  c.num_speakers = 20;
  double prev = 1.0;
  for (double scale : {0.25, 1.0, 4.0}) {
    c.spoof_artifact_scale = scale;
    const double eer = EnergyEer(c);
    CAPTURE(scale);
    CHECK(eer <= prev);
    prev = eer;
  }
}

TEST_CASE("trials cover all three classes with consistent labels") {
  const SynthConfig c = Small();
  const SynthCorpus corpus(c);
  const TrialSet trials = corpus.Trials();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < corpus.size(); ++i) index[corpus.UttId(i)] = i;
  std::set<TrialLabel> seen;
  for (const Trial &t : trials.trials()) {
    seen.insert(t.label);
    REQUIRE(index.count(t.enroll_id));
    REQUIRE(index.count(t.test_id));
    const std::size_t e = index[t.enroll_id], u = index[t.test_id];
    CHECK(e != u);
    CHECK(!corpus.IsSpoof(e));
    const bool same = corpus.SpeakerOf(e) == corpus.SpeakerOf(u);
    switch (t.label) {
      case TrialLabel::kTarget: CHECK((same && !corpus.IsSpoof(u))); break;
      case TrialLabel::kNontarget: CHECK((!same && !corpus.IsSpoof(u))); break;
      case TrialLabel::kSpoof: CHECK(corpus.IsSpoof(u)); break;
      default: FAIL("unexpected label");
    }
  }
  CHECK(seen.size() == 3);
}

TEST_CASE("invalid configs are rejected") {
  SynthConfig c = Small();
  c.artifact_layer = c.num_layers;
  CHECK_THROWS_AS(SynthCorpus{c}, ConfigError);
  c = Small();
  c.num_frames = 0;
  CHECK_THROWS_AS(SynthCorpus{c}, ConfigError);
  c = Small();
  c.spoof_fraction = 1.5;
  CHECK_THROWS_AS(SynthCorpus{c}, ConfigError);
  c = Small();
  c.noise_scale = -1.0;
  CHECK_THROWS_AS(SynthCorpus{c}, ConfigError);
}
