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

#include "sasv/protocol_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "sasv/errors.hpp"

namespace sasv {

const char *ToString(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::kBadMagic: return "bad magic";
    case FormatErrorKind::kBadHeader: return "bad header";
    case FormatErrorKind::kTruncated: return "truncated payload";
    case FormatErrorKind::kTrailingData: return "trailing data";
    case FormatErrorKind::kNonFinite: return "non-finite value";
  }
  return "format error";
}

LayeredFeatures LayeredFeatures::Zeros(std::uint32_t layers, std::uint32_t frames,
                                       std::uint32_t dim) {
  LayeredFeatures f;
  f.num_layers = layers;
  f.num_frames = frames;
  f.dim = dim;
  f.data.assign(static_cast<std::size_t>(layers) * frames * dim, 0.0);
  return f;
}

Matrix LayeredFeatures::Layer(std::size_t l) const {
  const double *begin = LayerData(l);
  return Matrix(num_frames, dim, std::vector<double>(begin, begin + num_frames * dim));
}

void LayeredFeatures::Validate() const {
  if (num_layers == 0 || num_frames == 0 || dim == 0)
    throw ShapeError("layered features need L, T, D >= 1, got " + std::to_string(num_layers) +
                     "x" + std::to_string(num_frames) + "x" + std::to_string(dim));
  if (data.size() != static_cast<std::size_t>(num_layers) * num_frames * dim)
    throw ShapeError("layered features payload length does not match L*T*D");
  RequireFinite(data, "layered features");
}

namespace {

void PutU32(std::string &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t GetU32(const char *p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

std::string ReadFile(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path.string(), "read failed");
  return bytes;
}

void WriteFile(const std::filesystem::path &path, const std::string &bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw IoError(path.string(), "write failed");
}

std::vector<std::string_view> SplitFields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

bool SkippableLine(const std::vector<std::string_view> &fields) {
  return fields.empty() || fields.front().front() == '#';
}

}  // namespace

std::string EncodeFeatures(const LayeredFeatures &features) {
  features.Validate();
  std::string out;
  out.reserve(kLft1HeaderBytes + features.data.size() * 4);
  out.append(kLft1Magic, sizeof(kLft1Magic));
  PutU32(out, features.num_layers);
  PutU32(out, features.num_frames);
  PutU32(out, features.dim);
  for (double v : features.data) {
    const float f = static_cast<float>(v);
    if (!std::isfinite(f)) throw NumericError("feature value overflows single precision");
    PutU32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

LayeredFeatures DecodeFeatures(std::string_view bytes, const std::string &origin) {
  if (bytes.size() < sizeof(kLft1Magic) ||
      std::memcmp(bytes.data(), kLft1Magic, sizeof(kLft1Magic)) != 0)
    throw FormatError(FormatErrorKind::kBadMagic, origin, "expected LFT1 magic");
  if (bytes.size() < kLft1HeaderBytes)
    throw FormatError(FormatErrorKind::kTruncated, origin, "header shorter than 20 bytes");
  LayeredFeatures f;
  f.num_layers = GetU32(bytes.data() + 8);
  f.num_frames = GetU32(bytes.data() + 12);
  f.dim = GetU32(bytes.data() + 16);
  if (f.num_layers == 0 || f.num_frames == 0 || f.dim == 0)
    throw FormatError(FormatErrorKind::kBadHeader, origin, "zero dimension in header");
  const std::uint64_t count = std::uint64_t{f.num_layers} * f.num_frames * f.dim;
  const std::uint64_t payload = bytes.size() - kLft1HeaderBytes;
  if (payload < count * 4)
    throw FormatError(FormatErrorKind::kTruncated, origin,
                      "header declares " + std::to_string(count) + " values, found " +
                          std::to_string(payload / 4));
  if (payload > count * 4)
    throw FormatError(FormatErrorKind::kTrailingData, origin,
                      std::to_string(payload - count * 4) + " bytes after payload");
  f.data.resize(count);
  const char *p = bytes.data() + kLft1HeaderBytes;
  for (std::uint64_t i = 0; i < count; ++i, p += 4) {
    const float v = std::bit_cast<float>(GetU32(p));
    if (!std::isfinite(v))
      throw FormatError(FormatErrorKind::kNonFinite, origin, "value #" + std::to_string(i));
    f.data[i] = static_cast<double>(v);
  }
  return f;
}

void WriteFeatures(const std::filesystem::path &path, const LayeredFeatures &features) {
  WriteFile(path, EncodeFeatures(features));
}

LayeredFeatures ReadFeatures(const std::filesystem::path &path) {
  return DecodeFeatures(ReadFile(path), path.string());
}

std::string_view ToString(TrialLabel label) {
  switch (label) {
    case TrialLabel::kTarget: return "target";
    case TrialLabel::kNontarget: return "nontarget";
    case TrialLabel::kSpoof: return "spoof";
    case TrialLabel::kUnknown: return "unknown";
  }
  return "unknown";
}

std::optional<TrialLabel> ParseTrialLabel(std::string_view text) {
  if (text == "target") return TrialLabel::kTarget;
  if (text == "nontarget") return TrialLabel::kNontarget;
  if (text == "spoof") return TrialLabel::kSpoof;
  if (text == "unknown") return TrialLabel::kUnknown;
  return std::nullopt;
}

void TrialSet::Add(Trial trial) {
  if (trial.trial_id.empty() || trial.enroll_id.empty() || trial.test_id.empty())
    throw Error("trial with an empty id");
  auto [it, inserted] = index_.emplace(trial.trial_id, trials_.size());
  if (!inserted) throw Error("duplicate trial id '" + trial.trial_id + "'");
  trials_.push_back(std::move(trial));
}

const Trial *TrialSet::Find(const std::string &trial_id) const {
  auto it = index_.find(trial_id);
  return it == index_.end() ? nullptr : &trials_[it->second];
}

TrialSet ParseTrials(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  TrialSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = SplitFields(line);
    if (SkippableLine(fields)) continue;
    if (fields.size() != 4)
      throw ParseError(path.string(), line_no,
                       "expected 'trial_id enroll_id test_id label', got " +
                           std::to_string(fields.size()) + " fields");
    const auto label = ParseTrialLabel(fields[3]);
    if (!label)
      throw ParseError(path.string(), line_no, "bad label '" + std::string(fields[3]) + "'");
    Trial trial{std::string(fields[0]), std::string(fields[1]), std::string(fields[2]), *label};
    if (set.Find(trial.trial_id) != nullptr)
      throw ParseError(path.string(), line_no, "duplicate trial id '" + trial.trial_id + "'");
    set.Add(std::move(trial));
  }
  return set;
}

void WriteTrials(const std::filesystem::path &path, const TrialSet &trials) {
  std::ostringstream out;
  for (const Trial &t : trials.trials())
    out << t.trial_id << ' ' << t.enroll_id << ' ' << t.test_id << ' ' << ToString(t.label)
        << '\n';
  WriteFile(path, out.str());
}

void ScoreSet::Add(const std::string &trial_id, double score) {
  if (trial_id.empty()) throw Error("score with an empty trial id");
  if (!std::isfinite(score)) throw NumericError("non-finite score for trial '" + trial_id + "'");
  auto [it, inserted] = index_.emplace(trial_id, entries_.size());
  if (!inserted) throw Error("duplicate score for trial '" + trial_id + "'");
  entries_.emplace_back(trial_id, score);
}

double ScoreSet::Get(const std::string &trial_id) const {
  auto it = index_.find(trial_id);
  if (it == index_.end()) throw Error("no score for trial '" + trial_id + "'");
  return entries_[it->second].second;
}

ScoreSet ReadScores(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  ScoreSet scores;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = SplitFields(line);
    if (fields.size() >= 3 && fields[0] == "#" && fields[1] == "system" && scores.size() == 0) {
      std::string tag(fields[2]);
      for (std::size_t i = 3; i < fields.size(); ++i) tag += " " + std::string(fields[i]);
      scores.set_system_tag(std::move(tag));
      continue;
    }
    if (SkippableLine(fields)) continue;
    if (fields.size() != 2)
      throw ParseError(path.string(), line_no, "expected 'trial_id score'");
    double value = 0.0;
    const auto tok = fields[1];
    const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || end != tok.data() + tok.size())
      throw ParseError(path.string(), line_no, "non-numeric score '" + std::string(tok) + "'");
    if (!std::isfinite(value))
      throw ParseError(path.string(), line_no, "non-finite score '" + std::string(tok) + "'");
    const std::string id(fields[0]);
    if (scores.Contains(id))
      throw ParseError(path.string(), line_no, "duplicate trial id '" + id + "'");
    scores.Add(id, value);
  }
  return scores;
}

void WriteScores(const std::filesystem::path &path, const ScoreSet &scores) {
  std::string out;
  if (!scores.system_tag().empty()) out += "# system " + scores.system_tag() + "\n";
  char buf[64];
  for (const auto &[id, score] : scores.entries()) {
    const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), score, std::chars_format::general, 17);
    (void)ec;
    out += id;
    out += ' ';
    out.append(buf, end);
    out += '\n';
  }
  WriteFile(path, out);
}

}  // namespace sasv
