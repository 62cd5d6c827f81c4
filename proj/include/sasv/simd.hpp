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

#ifndef SASV_SIMD_HPP_
#define SASV_SIMD_HPP_

// Runtime-dispatched double precision vector kernels. Every arithmetic inner
// loop of the toolkit (matrix products, layer aggregation, attention pooling)
// funnels through dot() and axpy(). The scalar versions are the reference;
// the vector versions must agree with them to rounding (see test_simd.cpp).

#include <cstddef>
#include <string_view>

namespace sasv::simd {

enum class Level { kScalar = 0, kAvx2 = 1, kNeon = 2 };

std::string_view LevelName(Level level);

// Parses "scalar", "avx2" or "neon"; throws ConfigError otherwise.
Level ParseLevel(std::string_view name);

// Best level both compiled in and supported by the running CPU.
Level DetectLevel();

// True if kernels for `level` are compiled in and usable on this CPU.
bool LevelAvailable(Level level);

// Level in effect. Initialized on first use from SASV_SIMD (if set) or
// DetectLevel().
Level ActiveLevel();

// Overrides the active level. Throws ConfigError if unavailable. Not
// thread-safe with respect to concurrently running kernels.
void SetLevel(Level level);

struct KernelTable {
  double (*dot)(const double *x, const double *y, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double *x, double *y, std::size_t n);
};

const KernelTable &Kernels();
const KernelTable &KernelsFor(Level level);

inline double Dot(const double *x, const double *y, std::size_t n) {
  return Kernels().dot(x, y, n);
}

inline void Axpy(double alpha, const double *x, double *y, std::size_t n) {
  Kernels().axpy(alpha, x, y, n);
}

namespace detail {
extern const KernelTable kScalarKernels;
#if defined(SASV_COMPILE_AVX2)
extern const KernelTable kAvx2Kernels;
#endif
#if defined(SASV_COMPILE_NEON)
extern const KernelTable kNeonKernels;
#endif
}  // namespace detail

}  // namespace sasv::simd

#endif  // SASV_SIMD_HPP_
