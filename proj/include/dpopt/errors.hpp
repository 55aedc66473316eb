// Copyright 2026 The dpopt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DPOPT_ERRORS_HPP_
#define DPOPT_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace dpopt {

// Bad user input: malformed config files, out-of-range flags, inconsistent
// option combinations. Maps to process exit code 2 in the CLI.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// No noise multiplier inside the search bracket satisfies the privacy budget.
class CalibrationError : public std::runtime_error {
 public:
  explicit CalibrationError(const std::string& what)
      : std::runtime_error(what) {}
};

// Numeric failure during a computation (divergence, degenerate input).
// Maps to process exit code 3 in the CLI.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dpopt

#endif  // DPOPT_ERRORS_HPP_
