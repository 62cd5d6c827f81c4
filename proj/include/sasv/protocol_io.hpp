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

#ifndef SASV_PROTOCOL_IO_HPP_
#define SASV_PROTOCOL_IO_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sasv/numerics.hpp"

namespace sasv {

// All-layer frame features of one utterance, laid out layer-major, then
// frame, then channel.
struct LayeredFeatures {
  std::uint32_t num_layers = 0;
  std::uint32_t num_frames = 0;
  std::uint32_t dim = 0;
  std::vector<double> data;

  static LayeredFeatures Zeros(std::uint32_t layers, std::uint32_t frames, std::uint32_t dim);

  std::size_t Index(std::size_t l, std::size_t t, std::size_t d) const {
    return (l * num_frames + t) * dim + d;
  }
  double &at(std::size_t l, std::size_t t, std::size_t d) { return data[Index(l, t, d)]; }
  double at(std::size_t l, std::size_t t, std::size_t d) const { return data[Index(l, t, d)]; }

  // Frames x dim slice of one layer.
  Matrix Layer(std::size_t l) const;
  const double *LayerData(std::size_t l) const { return data.data() + l * num_frames * dim; }

  // Throws ShapeError / NumericError when an invariant is violated.
  void Validate() const;

  bool operator==(const LayeredFeatures &) const = default;
};

// LFT1 layout: "LFT1\0\0\0\0", then L, T, D as uint32 LE, then L*T*D float32
// LE values. Values are rounded to single precision on write.
inline constexpr char kLft1Magic[8] = {'L', 'F', 'T', '1', '\0', '\0', '\0', '\0'};
inline constexpr std::size_t kLft1HeaderBytes = 8 + 3 * 4;

void WriteFeatures(const std::filesystem::path &path, const LayeredFeatures &features);
LayeredFeatures ReadFeatures(const std::filesystem::path &path);
// In-memory codec used by the file functions. `origin` labels errors.
std::string EncodeFeatures(const LayeredFeatures &features);
LayeredFeatures DecodeFeatures(std::string_view bytes, const std::string &origin = "<memory>");

enum class TrialLabel { kTarget, kNontarget, kSpoof, kUnknown };

std::string_view ToString(TrialLabel label);
std::optional<TrialLabel> ParseTrialLabel(std::string_view text);

struct Trial {
  std::string trial_id;
  std::string enroll_id;
  std::string test_id;
  TrialLabel label = TrialLabel::kUnknown;

  bool operator==(const Trial &) const = default;
};

class TrialSet {
 public:
  // Throws Error on an empty id or a duplicate trial_id.
  void Add(Trial trial);
  const std::vector<Trial> &trials() const { return trials_; }
  std::size_t size() const { return trials_.size(); }
  const Trial *Find(const std::string &trial_id) const;

 private:
  std::vector<Trial> trials_;
  std::unordered_map<std::string, std::size_t> index_;
};

// One trial per line: "trial_id enroll_id test_id label". Blank lines and
// lines starting with '#' are skipped. Errors carry the 1-based line number.
TrialSet ParseTrials(const std::filesystem::path &path);
void WriteTrials(const std::filesystem::path &path, const TrialSet &trials);

// Per-trial scores in insertion order.
class ScoreSet {
 public:
  ScoreSet() = default;
  explicit ScoreSet(std::string system_tag) : system_tag_(std::move(system_tag)) {}

  // Throws Error on a duplicate id and NumericError on a non-finite score.
  void Add(const std::string &trial_id, double score);
  bool Contains(const std::string &trial_id) const { return index_.count(trial_id) != 0; }
  // Throws Error if absent.
  double Get(const std::string &trial_id) const;

  const std::vector<std::pair<std::string, double>> &entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const std::string &system_tag() const { return system_tag_; }
  void set_system_tag(std::string tag) { system_tag_ = std::move(tag); }

 private:
  std::string system_tag_;
  std::vector<std::pair<std::string, double>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// "trial_id score" per line, scores printed with 17 significant digits. A
// leading "# system <tag>" line carries the system tag (the rest of the line,
// whitespace-normalized).
ScoreSet ReadScores(const std::filesystem::path &path);
void WriteScores(const std::filesystem::path &path, const ScoreSet &scores);

}  // namespace sasv

#endif  // SASV_PROTOCOL_IO_HPP_
