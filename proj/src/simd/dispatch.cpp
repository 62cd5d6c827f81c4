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

#include <atomic>
#include <cstdlib>
#include <string>

#include "sasv/errors.hpp"
#include "sasv/simd.hpp"

namespace sasv::simd {
namespace {

bool CpuHasAvx2Fma() {
#if defined(SASV_COMPILE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Level InitialLevel() {
  if (const char *env = std::getenv("SASV_SIMD"); env != nullptr && *env != '\0') {
    Level level = ParseLevel(env);
    if (!LevelAvailable(level))
      throw ConfigError("SASV_SIMD=" + std::string(env) + " is not available on this CPU");
    return level;
  }
  return DetectLevel();
}

std::atomic<int> &ActiveSlot() {
  static std::atomic<int> slot{static_cast<int>(InitialLevel())};
  return slot;
}

}  // namespace

std::string_view LevelName(Level level) {
  switch (level) {
    case Level::kScalar: return "scalar";
    case Level::kAvx2: return "avx2";
    case Level::kNeon: return "neon";
  }
  return "unknown";
}

Level ParseLevel(std::string_view name) {
  if (name == "scalar") return Level::kScalar;
  if (name == "avx2") return Level::kAvx2;
  if (name == "neon") return Level::kNeon;
  throw ConfigError("unknown SIMD level '" + std::string(name) + "'");
}

bool LevelAvailable(Level level) {
  switch (level) {
    case Level::kScalar: return true;
    case Level::kAvx2: return CpuHasAvx2Fma();
    case Level::kNeon:
#if defined(SASV_COMPILE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Level DetectLevel() {
  if (LevelAvailable(Level::kAvx2)) return Level::kAvx2;
  if (LevelAvailable(Level::kNeon)) return Level::kNeon;
  return Level::kScalar;
}

Level ActiveLevel() { return static_cast<Level>(ActiveSlot().load(std::memory_order_relaxed)); }

void SetLevel(Level level) {
  if (!LevelAvailable(level))
    throw ConfigError("SIMD level " + std::string(LevelName(level)) + " is not available");
  ActiveSlot().store(static_cast<int>(level), std::memory_order_relaxed);
}

const KernelTable &KernelsFor(Level level) {
  switch (level) {
#if defined(SASV_COMPILE_AVX2)
    case Level::kAvx2: return detail::kAvx2Kernels;
#endif
#if defined(SASV_COMPILE_NEON)
    case Level::kNeon: return detail::kNeonKernels;
#endif
    default: return detail::kScalarKernels;
  }
}

const KernelTable &Kernels() { return KernelsFor(ActiveLevel()); }

}  // namespace sasv::simd
