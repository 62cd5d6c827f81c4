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

#ifndef SASV_NUMERICS_HPP_
#define SASV_NUMERICS_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace sasv {

// Dense row-major matrix of doubles. Rows index time wherever a matrix holds
// frame-level features.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  // Throws ShapeError if data.size() != rows * cols.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix Identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double &operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const Matrix &other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

bool AllFinite(std::span<const double> values);

// Throws NumericError naming `what` if any entry is NaN or infinite.
void RequireFinite(std::span<const double> values, const char *what);

// Max-subtracted softmax. Throws NumericError on non-finite input and
// ShapeError on empty input.
std::vector<double> Softmax(std::span<const double> logits);

// A * B. Throws ShapeError unless A.cols == B.rows.
Matrix MatMul(const Matrix &a, const Matrix &b);
// A^T * B. Throws ShapeError unless A.rows == B.rows.
Matrix MatMulTransA(const Matrix &a, const Matrix &b);
// A * B^T. Throws ShapeError unless A.cols == B.cols.
Matrix MatMulTransB(const Matrix &a, const Matrix &b);

struct ColumnStats {
  std::vector<double> mean;
  std::vector<double> std;  // population standard deviation, divisor = rows
};

// Per-column mean and population standard deviation. Throws ShapeError on an
// empty matrix.
ColumnStats ComputeColumnStats(const Matrix &m);

// Seedable generator with a platform-independent stream. The engine is
// std::mt19937_64 (its output sequence is fixed by the standard); the
// uniform and normal transforms are implemented here because the standard
// distributions are implementation-defined:
//   Uniform01: top 53 bits of one engine draw, times 2^-53, in [0, 1).
//   Normal:    Box-Muller on two uniforms, both outputs used in order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t NextU64() { return engine_(); }
  double Uniform01();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform01(); }
  double Normal();
  bool Bernoulli(double p) { return Uniform01() < p; }
  // Uniform integer in [0, n). n must be positive.
  std::size_t Index(std::size_t n);

  // Independent child stream for (seed, index); the same pair always yields
  // the same child, regardless of how much the parent has been used.
  static Rng Derive(std::uint64_t seed, std::uint64_t index);

  template <typename T>
  void Shuffle(std::vector<T> &items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = Index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t SplitMix64(std::uint64_t x);

}  // namespace sasv

#endif  // SASV_NUMERICS_HPP_
