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


// Command-line entry point: synth, train, score, calibrate, fuse, eval,
// gradcheck and replay. Data goes to `out`, one-line errors to `err`.

#ifndef SASV_CLI_HPP_
#define SASV_CLI_HPP_

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace sasv {

inline constexpr std::string_view kVersion = "0.1.0";

// `args` excludes the program name. Exit codes: 0 success, 1 runtime
// failure (or a failed gradcheck), 2 usage error. Never throws.
int Dispatch(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);
int Dispatch(int argc, const char *const *argv);

}  // namespace sasv

#endif  // SASV_CLI_HPP_
