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

#include "dpopt/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace dpopt::diagnostics {
namespace {

void check_clip_bound(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw std::invalid_argument("diagnostics: clip bound must be positive");
  }
}

void check_labels(std::size_t rows, std::span<const int> labels) {
  if (labels.size() != rows) {
    throw std::invalid_argument("diagnostics: labels/rows size mismatch");
  }
}

double interpolated_quantile(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = p * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

double retained_weight_from_norm(double norm, double c) {
  check_clip_bound(c);
  if (norm < 0.0 || !std::isfinite(norm)) {
    throw std::invalid_argument("diagnostics: norm must be >= 0");
  }
  return norm > c ? c / norm : 1.0;
}

double retained_weight(std::span<const double> g, double c) {
  return retained_weight_from_norm(l2_norm(g), c);
}

std::vector<ClassRetainedWeight> class_retained_weights(
    const Matrix& grads, std::span<const int> labels, double c) {
  check_clip_bound(c);
  check_labels(grads.rows(), labels);
  const std::vector<double> norms = row_norms(grads);
  std::map<int, std::pair<std::size_t, double>> per_class;
  for (std::size_t i = 0; i < norms.size(); ++i) {
    auto& [count, sum] = per_class[labels[i]];
    ++count;
    sum += retained_weight_from_norm(norms[i], c);
  }
  std::vector<ClassRetainedWeight> out;
  out.reserve(per_class.size());
  double max_mean = 0.0;
  for (const auto& [class_id, acc] : per_class) {
    ClassRetainedWeight w;
    w.class_id = class_id;
    w.count = acc.first;
    w.mean_weight = acc.second / static_cast<double>(acc.first);
    max_mean = std::max(max_mean, w.mean_weight);
    out.push_back(w);
  }
  for (ClassRetainedWeight& w : out) {
    w.relative_weight = w.mean_weight / max_mean;
  }
  return out;
}

std::vector<ClassRetainedWeight> relative_retained_weights(
    std::vector<ClassRetainedWeight> current,
    const std::vector<ClassRetainedWeight>& baseline) {
  if (baseline.empty()) {
    throw std::invalid_argument("relative_retained_weights: empty baseline");
  }
  double max_mean = 0.0;
  for (const ClassRetainedWeight& w : baseline) {
    max_mean = std::max(max_mean, w.mean_weight);
  }
  for (ClassRetainedWeight& w : current) {
    w.relative_weight = w.mean_weight / max_mean;
  }
  return current;
}

GradNormSummary summarize_norms(std::vector<double> norms, std::size_t bins) {
  if (norms.empty()) {
    throw std::invalid_argument("summarize_norms: no norms");
  }
  if (bins < 1) {
    throw std::invalid_argument("summarize_norms: bins must be >= 1");
  }
  GradNormSummary s;
  s.count = norms.size();
  std::sort(norms.begin(), norms.end());
  for (std::size_t i = 0; i < s.kQuantileProbs.size(); ++i) {
    s.quantiles[i] = interpolated_quantile(norms, s.kQuantileProbs[i]);
  }

  const auto first_pos =
      std::upper_bound(norms.begin(), norms.end(), 0.0) - norms.begin();
  s.zero_count = static_cast<std::size_t>(first_pos);
  if (s.zero_count == norms.size()) return s;

  const double lo = norms[s.zero_count];
  const double hi = norms.back();
  if (lo == hi) {
    s.bin_edges = {lo, hi};
    s.bin_counts = {norms.size() - s.zero_count};
    return s;
  }
  const double log_lo = std::log(lo);
  const double log_span = std::log(hi) - log_lo;
  s.bin_edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    s.bin_edges[i] = std::exp(log_lo + log_span * static_cast<double>(i) /
                                           static_cast<double>(bins));
  }
  s.bin_edges.front() = lo;
  s.bin_edges.back() = hi;
  s.bin_counts.assign(bins, 0);
  for (std::size_t i = s.zero_count; i < norms.size(); ++i) {
    double pos = (std::log(norms[i]) - log_lo) / log_span *
                 static_cast<double>(bins);
    auto bin = static_cast<std::size_t>(std::clamp(
        pos, 0.0, static_cast<double>(bins) - 1.0));
    ++s.bin_counts[bin];
  }
  return s;
}

GradNormSummary grad_norm_distribution(const Matrix& grads,
                                       std::size_t bins) {
  return summarize_norms(row_norms(grads), bins);
}

std::vector<ClassAccuracy> per_class_accuracy(std::span<const int> predictions,
                                              std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument(
        "per_class_accuracy: predictions/labels size mismatch");
  }
  if (labels.empty()) {
    throw std::invalid_argument("per_class_accuracy: empty input");
  }
  std::map<int, std::pair<std::size_t, std::size_t>> per_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& [count, correct] = per_class[labels[i]];
    ++count;
    if (predictions[i] == labels[i]) ++correct;
  }
  std::vector<ClassAccuracy> out;
  out.reserve(per_class.size());
  for (const auto& [class_id, acc] : per_class) {
    out.push_back({class_id, acc.first,
                   static_cast<double>(acc.second) /
                       static_cast<double>(acc.first)});
  }
  return out;
}

double macro_accuracy(std::span<const int> predictions,
                      std::span<const int> labels) {
  const std::vector<ClassAccuracy> per_class =
      per_class_accuracy(predictions, labels);
  double sum = 0.0;
  for (const ClassAccuracy& c : per_class) sum += c.accuracy;
  return sum / static_cast<double>(per_class.size());
}

}  // namespace dpopt::diagnostics
