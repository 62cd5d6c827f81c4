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

#include "sasv/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sasv/errors.hpp"

namespace sasv {

std::string_view ToString(Task task) {
  switch (task) {
    case Task::kCmBce: return "cm_bce";
    case Task::kAsvAam: return "asv_aam";
    case Task::kNone: return "none";
  }
  return "none";
}

Task ParseTask(std::string_view text) {
  if (text == "cm_bce" || text == "cm") return Task::kCmBce;
  if (text == "asv_aam" || text == "asv") return Task::kAsvAam;
  throw ConfigError("unknown task '" + std::string(text) + "' (expected cm_bce or asv_aam)");
}

std::vector<std::span<double>> Model::Tensors() {
  auto m = mhfa.Tensors();
  std::vector<std::span<double>> out(m.begin(), m.end());
  out.push_back(head.weights.values());
  out.push_back(std::span<double>(head.bias));
  return out;
}

std::vector<std::span<const double>> Model::Tensors() const {
  auto m = mhfa.Tensors();
  std::vector<std::span<const double>> out(m.begin(), m.end());
  out.push_back(head.weights.values());
  out.push_back(std::span<const double>(head.bias));
  return out;
}

namespace {

class Writer {
 public:
  void U32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void F64(double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  void Bytes(const char *p, std::size_t n) { out_.append(p, n); }
  std::string Take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view bytes, const std::string &origin) : bytes_(bytes), origin_(origin) {}

  std::uint64_t Raw(int width) {
    if (pos_ + static_cast<std::size_t>(width) > bytes_.size())
      throw FormatError(FormatErrorKind::kTruncated, origin_,
                        "checkpoint ends at byte " + std::to_string(bytes_.size()));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::uint32_t U32() { return static_cast<std::uint32_t>(Raw(4)); }
  double F64() {
    const double v = std::bit_cast<double>(Raw(8));
    if (!std::isfinite(v))
      throw FormatError(FormatErrorKind::kNonFinite, origin_, "at byte " + std::to_string(pos_ - 8));
    return v;
  }
  void Fill(std::span<double> dst) {
    for (double &v : dst) v = F64();
  }
  bool AtEnd() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  const std::string &origin_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string EncodeCheckpoint(const Model &model) {
  model.mhfa.Validate(model.config);
  for (auto t : model.Tensors()) RequireFinite(t, "checkpoint tensor");
  if (model.head.weights.cols() != 0 && model.head.weights.cols() != model.config.embed_dim)
    throw ShapeError("head weight columns do not match the embedding size");
  Writer w;
  w.Bytes(kMhfa1Magic, sizeof(kMhfa1Magic));
  w.U32(static_cast<std::uint32_t>(model.task));
  const MHFAConfig &c = model.config;
  for (std::size_t v : {c.num_layers, c.input_dim, c.num_heads, c.compression_dim, c.embed_dim})
    w.U32(static_cast<std::uint32_t>(v));
  for (auto t : model.mhfa.Tensors())
    for (double v : t) w.F64(v);
  w.U32(static_cast<std::uint32_t>(model.head.weights.rows()));
  w.U32(static_cast<std::uint32_t>(model.head.weights.cols()));
  w.U32(static_cast<std::uint32_t>(model.head.bias.size()));
  for (double v : model.head.weights.values()) w.F64(v);
  for (double v : model.head.bias) w.F64(v);
  return w.Take();
}

Model DecodeCheckpoint(std::string_view bytes, const std::string &origin) {
  if (bytes.size() < sizeof(kMhfa1Magic) ||
      std::memcmp(bytes.data(), kMhfa1Magic, sizeof(kMhfa1Magic)) != 0)
    throw FormatError(FormatErrorKind::kBadMagic, origin, "expected MHFA1 magic");
  Reader r(bytes.substr(sizeof(kMhfa1Magic)), origin);
  Model m;
  const std::uint32_t task = r.U32();
  if (task > static_cast<std::uint32_t>(Task::kAsvAam))
    throw FormatError(FormatErrorKind::kBadHeader, origin, "unknown task id " + std::to_string(task));
  m.task = static_cast<Task>(task);
  m.config.num_layers = r.U32();
  m.config.input_dim = r.U32();
  m.config.num_heads = r.U32();
  m.config.compression_dim = r.U32();
  m.config.embed_dim = r.U32();
  try {
    m.config.Validate();
  } catch (const ConfigError &e) {
    throw FormatError(FormatErrorKind::kBadHeader, origin, e.what());
  }
  m.mhfa = MHFAParams::Zeros(m.config);
  for (auto t : m.mhfa.Tensors()) r.Fill(t);
  const std::uint32_t rows = r.U32(), cols = r.U32(), bias = r.U32();
  if (rows != 0 && cols != m.config.embed_dim)
    throw FormatError(FormatErrorKind::kBadHeader, origin, "head width != embed_dim");
  m.head.weights = Matrix(rows, cols);
  m.head.bias.assign(bias, 0.0);
  r.Fill(m.head.weights.values());
  r.Fill(m.head.bias);
  if (!r.AtEnd()) throw FormatError(FormatErrorKind::kTrailingData, origin, "bytes after head");
  return m;
}

void WriteCheckpoint(const std::filesystem::path &path, const Model &model) {
  const std::string bytes = EncodeCheckpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw IoError(path.string(), "write failed");
}

Model ReadCheckpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return DecodeCheckpoint(bytes, path.string());
}

}  // namespace sasv
