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

#ifndef SASV_CHECKPOINT_HPP_
#define SASV_CHECKPOINT_HPP_

// MHFA1 checkpoint layout, little-endian throughout:
//
//   8 bytes   magic "MHFA1\0\0\0"
//   u32       task (0 none, 1 cm_bce, 2 asv_aam)
//   u32 x 5   L, D, H, C, E
//   f64 ...   MHFAParams tensors in MHFAParams::kTensorNames order
//   u32 x 3   head rows, head cols, head bias length
//   f64 ...   head weights (row-major), then head bias
//
// The file must end exactly after the head bias.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sasv/mhfa.hpp"

namespace sasv {

enum class Task : std::uint32_t { kNone = 0, kCmBce = 1, kAsvAam = 2 };

std::string_view ToString(Task task);
// "cm_bce" / "asv_aam"; throws ConfigError otherwise.
Task ParseTask(std::string_view text);

// Task head on top of the embedding. cm_bce: 1 x E weights and one bias
// (logit = w . e + b). asv_aam: one class centre per row, no bias.
struct ModelHead {
  Matrix weights;
  std::vector<double> bias;
  bool operator==(const ModelHead &) const = default;
};

struct Model {
  Task task = Task::kNone;
  MHFAConfig config;
  MHFAParams mhfa;
  ModelHead head;

  // MHFA tensors followed by head weights and head bias.
  std::vector<std::span<double>> Tensors();
  std::vector<std::span<const double>> Tensors() const;
  bool operator==(const Model &) const = default;
};

inline constexpr char kMhfa1Magic[8] = {'M', 'H', 'F', 'A', '1', '\0', '\0', '\0'};

std::string EncodeCheckpoint(const Model &model);
Model DecodeCheckpoint(std::string_view bytes, const std::string &origin = "<memory>");
void WriteCheckpoint(const std::filesystem::path &path, const Model &model);
Model ReadCheckpoint(const std::filesystem::path &path);

}  // namespace sasv

#endif  // SASV_CHECKPOINT_HPP_
