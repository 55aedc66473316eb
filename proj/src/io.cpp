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

#include "dpopt/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dpopt/errors.hpp"

namespace dpopt::io {
namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::string current;
  std::stringstream ss(value);
  while (std::getline(ss, current, ',')) {
    const std::string item = trim(current);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_string(const std::string& text) {
  KeyValueConfig config;
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected `key = value`, got `" + stripped + "`");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key");
    }
    config.entries_[key] = value;
  }
  return config;
}

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  return parse_string(read_text_file(path));
}

bool KeyValueConfig::has(const std::string& key) const {
  return entries_.count(key) > 0;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

void KeyValueConfig::set_double(const std::string& key, double value) {
  entries_[key] = format_double(value);
}

void KeyValueConfig::set_long(const std::string& key, long value) {
  entries_[key] = std::to_string(value);
}

void KeyValueConfig::set_u64(const std::string& key, std::uint64_t value) {
  entries_[key] = std::to_string(value);
}

std::string KeyValueConfig::get_string(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw ConfigError("missing config key `" + key + "`");
  }
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key) const {
  return parse_double(get_string(key), key);
}

double KeyValueConfig::get_double(const std::string& key,
                                  double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long KeyValueConfig::get_long(const std::string& key) const {
  return parse_long(get_string(key), key);
}

long KeyValueConfig::get_long(const std::string& key, long fallback) const {
  return has(key) ? get_long(key) : fallback;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key,
                                      std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string text = get_string(key);
  char* end = nullptr;
  const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
  if (end == text.c_str() || *end != '\0') {
    throw ConfigError("config key `" + key + "`: `" + text +
                      "` is not an unsigned integer");
  }
  return static_cast<std::uint64_t>(v);
}

std::vector<double> KeyValueConfig::get_double_list(
    const std::string& key) const {
  std::vector<double> out;
  for (const std::string& item : split_list(get_string(key))) {
    out.push_back(parse_double(item, key));
  }
  return out;
}

std::vector<long> KeyValueConfig::get_long_list(const std::string& key) const {
  std::vector<long> out;
  for (const std::string& item : split_list(get_string(key))) {
    out.push_back(parse_long(item, key));
  }
  return out;
}

std::vector<std::string> KeyValueConfig::get_string_list(
    const std::string& key) const {
  return split_list(get_string(key));
}

void KeyValueConfig::require_known_keys(
    const std::vector<std::string>& allowed) const {
  for (const auto& [key, value] : entries_) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown config key `" + key + "`");
    }
  }
}

std::string KeyValueConfig::serialize() const {
  std::string out;
  for (const auto& [key, value] : entries_) {
    out += key;
    out += " = ";
    out += value;
    out += "\n";
  }
  return out;
}

std::string format_double(double value) {
  char buffer[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buffer, sizeof(buffer), "%.*g", precision, value);
    if (std::strtod(buffer, nullptr) == value) break;
  }
  return buffer;
}

std::string format_cell(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.12g", value);
  return buffer;
}

std::string csv_line(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) line += ',';
    line += fields[i];
  }
  line += '\n';
  return line;
}

double parse_double(const std::string& text, const std::string& context) {
  const std::string stripped = trim(text);
  if (stripped.empty()) {
    throw ConfigError(context + ": empty value where a number was expected");
  }
  char* end = nullptr;
  const double v = std::strtod(stripped.c_str(), &end);
  if (end == stripped.c_str() || *end != '\0') {
    throw ConfigError(context + ": `" + stripped + "` is not a number");
  }
  return v;
}

long parse_long(const std::string& text, const std::string& context) {
  const std::string stripped = trim(text);
  if (stripped.empty()) {
    throw ConfigError(context + ": empty value where an integer was expected");
  }
  char* end = nullptr;
  const long v = std::strtol(stripped.c_str(), &end, 10);
  if (end == stripped.c_str() || *end != '\0') {
    throw ConfigError(context + ": `" + stripped + "` is not an integer");
  }
  return v;
}

Matrix read_gradients_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open gradients file `" + path + "`");
  std::vector<std::vector<double>> rows;
  long declared_cols = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    if (rows.empty() && declared_cols < 0 && stripped.rfind("d=", 0) == 0) {
      declared_cols = parse_long(stripped.substr(2), path + ": d header");
      if (declared_cols < 1) {
        throw ConfigError(path + ": d header must be positive");
      }
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(stripped);
    std::string token;
    while (ss >> token) {
      row.push_back(
          parse_double(token, path + ":" + std::to_string(line_no)));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": row has " + std::to_string(row.size()) +
                        " values, expected " +
                        std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(path + ": no gradient rows");
  if (declared_cols >= 0 &&
      rows.front().size() != static_cast<std::size_t>(declared_cols)) {
    throw ConfigError(path + ": d header says " +
                      std::to_string(declared_cols) + " but rows have " +
                      std::to_string(rows.front().size()) + " values");
  }
  return Matrix::from_rows(rows);
}

void write_gradients_file(const std::string& path, const Matrix& grads) {
  std::string out = "d=" + std::to_string(grads.cols()) + "\n";
  for (std::size_t i = 0; i < grads.rows(); ++i) {
    for (std::size_t j = 0; j < grads.cols(); ++j) {
      if (j > 0) out += ' ';
      out += format_double(grads(i, j));
    }
    out += '\n';
  }
  write_text_file(path, out);
}

std::vector<int> read_labels_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open labels file `" + path + "`");
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    labels.push_back(static_cast<int>(
        parse_long(stripped, path + ":" + std::to_string(line_no))));
  }
  if (labels.empty()) throw ConfigError(path + ": no labels");
  return labels;
}

void write_labels_file(const std::string& path,
                       const std::vector<int>& labels) {
  std::string out;
  for (int label : labels) {
    out += std::to_string(label);
    out += '\n';
  }
  write_text_file(path, out);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file `" + path + "`");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write file `" + path + "`");
  out << content;
}

}  // namespace dpopt::io
