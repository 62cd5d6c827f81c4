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

#include "sasv/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "sasv/errors.hpp"
#include "sasv/simd.hpp"

namespace sasv {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_)
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " != " +
                     std::to_string(rows_) + "x" + std::to_string(cols_));
}

Matrix Matrix::Identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool AllFinite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void RequireFinite(std::span<const double> values, const char *what) {
  if (!AllFinite(values)) throw NumericError(std::string("non-finite value in ") + what);
}

std::vector<double> Softmax(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("softmax of an empty vector");
  RequireFinite(logits, "softmax input");
  const double max = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max);
    sum += out[i];
  }
  for (double &v : out) v /= sum;
  return out;
}

namespace {

std::string Shape(const Matrix &m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix MatMul(const Matrix &a, const Matrix &b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul shape mismatch: " + Shape(a) + " * " + Shape(b));
  Matrix c(a.rows(), b.cols());
  const auto &k = simd::Kernels();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double *out = c.row(i).data();
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double s = a(i, p);
      if (s != 0.0) k.axpy(s, b.row(p).data(), out, b.cols());
    }
  }
  return c;
}

Matrix MatMulTransA(const Matrix &a, const Matrix &b) {
  if (a.rows() != b.rows())
    throw ShapeError("matmul shape mismatch: " + Shape(a) + "^T * " + Shape(b));
  Matrix c(a.cols(), b.cols());
  const auto &k = simd::Kernels();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double *brow = b.row(r).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double s = a(r, i);
      if (s != 0.0) k.axpy(s, brow, c.row(i).data(), b.cols());
    }
  }
  return c;
}

Matrix MatMulTransB(const Matrix &a, const Matrix &b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul shape mismatch: " + Shape(a) + " * " + Shape(b) + "^T");
  Matrix c(a.rows(), b.rows());
  const auto &k = simd::Kernels();
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j)
      c(i, j) = k.dot(a.row(i).data(), b.row(j).data(), a.cols());
  return c;
}

ColumnStats ComputeColumnStats(const Matrix &m) {
  if (m.rows() == 0 || m.cols() == 0) throw ShapeError("column statistics of an empty matrix");
  const std::size_t rows = m.rows(), cols = m.cols();
  ColumnStats stats{std::vector<double>(cols, 0.0), std::vector<double>(cols, 0.0)};
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) stats.mean[c] += m(r, c);
  for (double &v : stats.mean) v /= static_cast<double>(rows);
  // Two-pass variance: exact zero for constant columns.
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = m(r, c) - stats.mean[c];
      stats.std[c] += d * d;
    }
  for (double &v : stats.std) v = std::sqrt(v / static_cast<double>(rows));
  return stats;
}

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double Rng::Uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::Normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = Uniform01();
  while (u1 <= 0.0) u1 = Uniform01();
  const double u2 = Uniform01();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::size_t Rng::Index(std::size_t n) {
  // Plain rejection sampling; no platform-dependent multiply-high tricks.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

Rng Rng::Derive(std::uint64_t seed, std::uint64_t index) {
  return Rng(SplitMix64(SplitMix64(seed) ^ (index * 0xd1b54a32d192ed03ULL + 1)));
}

}  // namespace sasv
