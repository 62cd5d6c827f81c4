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


#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "sasv/errors.hpp"
#include "sasv/protocol_io.hpp"
#include "test_util.hpp"

using namespace sasv;
using sasv::testing::TempDir;

namespace {

void WriteText(const std::filesystem::path &p, const std::string &text) {
  std::ofstream(p, std::ios::binary) << text;
}

FormatErrorKind KindOf(const std::string &bytes) {
  try {
    DecodeFeatures(bytes);
  } catch (const FormatError &e) {
    return e.kind();
  }
  FAIL("no FormatError");
  return FormatErrorKind::kBadMagic;
}

std::size_t LineOf(const std::filesystem::path &p) {
  try {
    ParseTrials(p);
  } catch (const ParseError &e) {
    return e.line();
  }
  FAIL("no ParseError");
  return 0;
}

}  // namespace

TEST_CASE("a 1x1x1 LFT1 file is magic + header + one float") {
  TempDir dir("lft");
  LayeredFeatures x = LayeredFeatures::Zeros(1, 1, 1);
  WriteFeatures(dir / "one.lft", x);
  CHECK(std::filesystem::file_size(dir / "one.lft") == 8 + 12 + 4);
  const std::string bytes = EncodeFeatures(x);
  CHECK(bytes.substr(0, 8) == std::string("LFT1\0\0\0\0", 8));
  // Little-endian dims.
  CHECK(bytes[8] == 1);
  CHECK(bytes[9] == 0);
}

TEST_CASE("LFT1 round trip is exact at single precision") {
  TempDir dir("lft");
  Rng rng(1);
  LayeredFeatures x = testing::RandomFeatures(3, 5, 7, rng);
  for (double &v : x.data) v = static_cast<float>(v);
  WriteFeatures(dir / "x.lft", x);
  const LayeredFeatures y = ReadFeatures(dir / "x.lft");
  CHECK(y == x);
  // Byte-identical payload on a second write.
  CHECK(EncodeFeatures(y) == EncodeFeatures(x));
  CHECK(y.Layer(2)(4, 6) == x.at(2, 4, 6));
}

TEST_CASE("values are rounded to float on write") {
  LayeredFeatures x = LayeredFeatures::Zeros(1, 1, 2);
  x.data = {0.1, 1.0 / 3.0};
  const LayeredFeatures y = DecodeFeatures(EncodeFeatures(x));
  CHECK(y.data[0] == static_cast<double>(0.1f));
  CHECK(y.data[1] == static_cast<double>(1.0f / 3.0f));
}

TEST_CASE("LFT1 decode errors are distinct") {
  LayeredFeatures x = LayeredFeatures::Zeros(2, 2, 2);
  const std::string good = EncodeFeatures(x);

  std::string bad_magic = good;
  std::memcpy(bad_magic.data(), "XXXX", 4);
  CHECK(KindOf(bad_magic) == FormatErrorKind::kBadMagic);

  CHECK(KindOf(good.substr(0, good.size() - 4)) == FormatErrorKind::kTruncated);  // 7 floats
  CHECK(KindOf(good.substr(0, 10)) == FormatErrorKind::kTruncated);
  CHECK(KindOf(good + "z") == FormatErrorKind::kTrailingData);

  std::string zero_layers = good;
  zero_layers[8] = 0;
  CHECK(KindOf(zero_layers) == FormatErrorKind::kBadHeader);

  std::string nan = good;
  const float q = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + 20, &q, 4);
  CHECK(KindOf(nan) == FormatErrorKind::kNonFinite);
}

TEST_CASE("LFT1 writer rejects invalid tensors") {
  TempDir dir("lft");
  LayeredFeatures empty;
  CHECK_THROWS(WriteFeatures(dir / "e.lft", empty));
  LayeredFeatures big = LayeredFeatures::Zeros(1, 1, 1);
  big.data[0] = 1e300;
  CHECK_THROWS_AS(EncodeFeatures(big), NumericError);
  CHECK_THROWS_AS(ReadFeatures(dir / "missing.lft"), IoError);
}

TEST_CASE("trial parsing") {
  TempDir dir("trials");
  WriteText(dir / "ok.txt", "# comment\n\nt1 e1 u1 target\nt2 e1 u2 nontarget\nt3 e1 u3 spoof\n"
                            "t4 e1 u4 unknown\n");
  const TrialSet ts = ParseTrials(dir / "ok.txt");
  REQUIRE(ts.size() == 4);
  CHECK(ts.trials()[0] == Trial{"t1", "e1", "u1", TrialLabel::kTarget});
  CHECK(ts.Find("t3")->label == TrialLabel::kSpoof);
  CHECK(ts.Find("nope") == nullptr);

  WriteText(dir / "dup.txt", "t1 e1 u1 target\nt1 e1 u2 target\n");
  CHECK(LineOf(dir / "dup.txt") == 2);
  WriteText(dir / "label.txt", "t1 e1 u1 target\nt2 e1 u2 bogus\n");
  CHECK(LineOf(dir / "label.txt") == 2);
  WriteText(dir / "fields.txt", "t1 e1 target\n");
  CHECK(LineOf(dir / "fields.txt") == 1);

  WriteTrials(dir / "out.txt", ts);
  CHECK(ParseTrials(dir / "out.txt").trials() == ts.trials());
}

TEST_CASE("score files round trip at 17 digits") {
  TempDir dir("scores");
  Rng rng(5);
  ScoreSet s("sys A");
  for (int i = 0; i < 1000; ++i) s.Add("t" + std::to_string(i), rng.Normal() * std::pow(10.0, rng.Index(30) - 15.0));
  WriteScores(dir / "s.txt", s);
  const ScoreSet r = ReadScores(dir / "s.txt");
  CHECK(r.system_tag() == "sys A");
  REQUIRE(r.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(r.entries()[i] == s.entries()[i]);
}

TEST_CASE("score file errors") {
  TempDir dir("scores");
  WriteText(dir / "one.txt", "t1 0.5\n");
  CHECK(ReadScores(dir / "one.txt").Get("t1") == 0.5);
  WriteText(dir / "nan.txt", "t1 NaN\n");
  CHECK_THROWS_AS(ReadScores(dir / "nan.txt"), ParseError);
  WriteText(dir / "text.txt", "t1 high\n");
  CHECK_THROWS_AS(ReadScores(dir / "text.txt"), ParseError);
  WriteText(dir / "dup.txt", "t1 1\nt1 2\n");
  CHECK_THROWS_AS(ReadScores(dir / "dup.txt"), ParseError);
  ScoreSet s;
  CHECK_THROWS_AS(s.Add("x", std::numeric_limits<double>::infinity()), NumericError);
  CHECK_THROWS(s.Get("x"));
}
