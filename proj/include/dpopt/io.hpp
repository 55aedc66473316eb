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

#ifndef DPOPT_IO_HPP_
#define DPOPT_IO_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dpopt/matrix.hpp"

namespace dpopt::io {

// Flat `key = value` configuration with `#` comment lines. Keys are unique
// (later assignments win) and serialize in sorted order, which makes emitted
// manifests canonical.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_string(const std::string& text);

  bool has(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const {
    return entries_;
  }

  void set(const std::string& key, const std::string& value);
  void set_double(const std::string& key, double value);
  void set_long(const std::string& key, long value);
  void set_u64(const std::string& key, std::uint64_t value);

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long get_long(const std::string& key) const;
  long get_long(const std::string& key, long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<long> get_long_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  // Throws ConfigError naming the first key not in `allowed`.
  void require_known_keys(const std::vector<std::string>& allowed) const;

  std::string serialize() const;

 private:
  std::map<std::string, std::string> entries_;
};

// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double value);
// Fixed %.12g form used in CSV data cells.
std::string format_cell(double value);

std::string csv_line(const std::vector<std::string>& fields);

double parse_double(const std::string& text, const std::string& context);
long parse_long(const std::string& text, const std::string& context);

// Gradient matrix file: optional `d=<cols>` first line, then one
// whitespace-separated row per example.
Matrix read_gradients_file(const std::string& path);
void write_gradients_file(const std::string& path, const Matrix& grads);

// One integer label per line.
std::vector<int> read_labels_file(const std::string& path);
void write_labels_file(const std::string& path,
                       const std::vector<int>& labels);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace dpopt::io

#endif  // DPOPT_IO_HPP_
