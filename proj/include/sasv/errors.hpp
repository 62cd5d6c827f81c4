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

#ifndef SASV_ERRORS_HPP_
#define SASV_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sasv {

// Base of every error thrown by the toolkit. what() is a single line so the
// CLI can forward it to stderr unchanged.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  IoError(std::string path, const std::string &what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string &path() const { return path_; }

 private:
  std::string path_;
};

enum class FormatErrorKind { kBadMagic, kBadHeader, kTruncated, kTrailingData, kNonFinite };

const char *ToString(FormatErrorKind kind);

class FormatError : public Error {
 public:
  FormatError(FormatErrorKind kind, const std::string &path, const std::string &what)
      : Error(path + ": " + ToString(kind) + ": " + what), kind_(kind) {}
  FormatErrorKind kind() const { return kind_; }

 private:
  FormatErrorKind kind_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string &path, std::size_t line, const std::string &what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Raised by the calibration / fusion fitters: single-class data, constant
// scores, anti-discriminative fits, non-convergence.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace sasv

#endif  // SASV_ERRORS_HPP_
