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


#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "doctest.h"
#include "sasv/errors.hpp"
#include "sasv/numerics.hpp"
#include "test_util.hpp"

using namespace sasv;

TEST_CASE("softmax matches an extended-precision oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.Index(20);
    std::vector<double> x(n);
    for (auto &v : x) v = 20.0 * rng.Normal();
    const auto p = Softmax(x);
    long double z = 0.0L;
    for (double v : x) z += std::exp(static_cast<long double>(v));
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const long double want = std::exp(static_cast<long double>(x[i])) / z;
      CHECK(std::abs(static_cast<long double>(p[i]) - want) <= 1e-15L);
      sum += p[i];
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("softmax is shift invariant and survives huge logits") {
  const std::vector<double> x{1.0, 2.0, 3.0}, y{1001.0, 1002.0, 1003.0};
  const auto a = Softmax(x), b = Softmax(y);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
  const auto c = Softmax(std::vector<double>{1e308, -1e308});
  CHECK(c[0] == 1.0);
  CHECK(c[1] == 0.0);
}

TEST_CASE("softmax rejects empty and non-finite input") {
  CHECK_THROWS_AS(Softmax(std::vector<double>{}), ShapeError);
  CHECK_THROWS_AS(Softmax(std::vector<double>{1.0, std::nan("")}), NumericError);
  CHECK_THROWS_AS(Softmax(std::vector<double>{std::numeric_limits<double>::infinity()}),
                  NumericError);
}

TEST_CASE("matmul variants match a naive triple loop") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.Index(9), k = 1 + rng.Index(9), n = 1 + rng.Index(9);
    const Matrix a = testing::RandomMatrix(m, k, rng), b = testing::RandomMatrix(k, n, rng);
    Matrix naive(m, n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t t = 0; t < k; ++t) naive(i, j) += a(i, t) * b(t, j);
    CHECK(testing::MaxAbsDiff(MatMul(a, b).values(), naive.values()) < 1e-12);

    Matrix at(k, m), bt(n, k);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t t = 0; t < k; ++t) at(t, i) = a(i, t);
    for (std::size_t t = 0; t < k; ++t)
      for (std::size_t j = 0; j < n; ++j) bt(j, t) = b(t, j);
    CHECK(testing::MaxAbsDiff(MatMulTransA(at, b).values(), naive.values()) < 1e-12);
    CHECK(testing::MaxAbsDiff(MatMulTransB(a, bt).values(), naive.values()) < 1e-12);
  }
}

TEST_CASE("matmul shape errors and identity") {
  Rng rng(4);
  const Matrix a = testing::RandomMatrix(3, 4, rng);
  CHECK(MatMul(a, Matrix::Identity(4)) == a);
  CHECK_THROWS_AS(MatMul(a, Matrix(3, 2)), ShapeError);
  CHECK_THROWS_AS(MatMulTransA(a, Matrix(4, 2)), ShapeError);
  CHECK_THROWS_AS(MatMulTransB(a, Matrix(2, 3)), ShapeError);
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>(3)), ShapeError);
}

TEST_CASE("column stats use the population divisor") {
  const Matrix m(4, 2, {1, 10, 2, 10, 3, 10, 4, 10});
  const ColumnStats s = ComputeColumnStats(m);
  CHECK(s.mean[0] == doctest::Approx(2.5));
  CHECK(s.std[0] == doctest::Approx(std::sqrt(1.25)));
  CHECK(s.mean[1] == 10.0);
  CHECK(s.std[1] == 0.0);
  CHECK_THROWS_AS(ComputeColumnStats(Matrix()), ShapeError);
}

TEST_CASE("column stats stay accurate with a large offset") {
  Matrix m(3, 1, {1e9 + 1, 1e9 + 2, 1e9 + 3});
  CHECK(ComputeColumnStats(m).std[0] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-6));
}

TEST_CASE("rng streams are deterministic and derive independently") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.NextU64() == b.NextU64());
  Rng c = Rng::Derive(5, 3), d = Rng::Derive(5, 3), e = Rng::Derive(5, 4);
  CHECK(c.Uniform01() == d.Uniform01());
  CHECK(c.NextU64() != e.NextU64());
}

TEST_CASE("mt19937_64 engine matches the standard's reference output") {
  // The 10000th output of a default-seeded mt19937_64 is fixed by the standard.
  Rng r(5489u);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = r.NextU64();
  CHECK(v == 9981545732273789042ull);
}

TEST_CASE("uniform, normal and index moments") {
  Rng r(9);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.Uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = r.Normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(std::abs(su / n - 0.5) < 5 * std::sqrt(1.0 / 12 / n));
  CHECK(std::abs(sn / n) < 5 / std::sqrt(double(n)));
  CHECK(std::abs(sn2 / n - 1.0) < 5 * std::sqrt(2.0 / n));
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[r.Index(7)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("shuffle is a permutation") {
  Rng r(3);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  r.Shuffle(v);
  CHECK(std::set<int>(v.begin(), v.end()).size() == 50);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted.front() == 0);
  CHECK(sorted.back() == 49);
}
