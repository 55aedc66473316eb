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

#ifndef DPOPT_DIAGNOSTICS_HPP_
#define DPOPT_DIAGNOSTICS_HPP_

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "dpopt/matrix.hpp"

namespace dpopt::diagnostics {

// Fraction of a gradient surviving standard clipping at bound c:
// min(1, c / ||g||). A zero gradient is untouched by clipping, weight 1.
double retained_weight_from_norm(double norm, double c);
double retained_weight(std::span<const double> g, double c);

struct ClassRetainedWeight {
  int class_id = 0;
  std::size_t count = 0;
  double mean_weight = 0.0;
  // mean_weight divided by the max class mean of the baseline; the result of
  // class_retained_weights is normalized against itself, so its own max
  // class sits at exactly 1.
  double relative_weight = 0.0;
};

// Per-class mean retained weight at bound c, one entry per distinct label,
// ascending class id.
std::vector<ClassRetainedWeight> class_retained_weights(
    const Matrix& grads, std::span<const int> labels, double c);

// Re-normalizes `current` against the max class mean of `baseline`
// (typically the C=1 run, following the reference-point convention).
std::vector<ClassRetainedWeight> relative_retained_weights(
    std::vector<ClassRetainedWeight> current,
    const std::vector<ClassRetainedWeight>& baseline);

// Distribution snapshot of per-example gradient norms.
struct GradNormSummary {
  static constexpr std::array<double, 5> kQuantileProbs{0.05, 0.25, 0.50,
                                                        0.75, 0.95};
  std::array<double, 5> quantiles{};
  // Log-spaced histogram over the positive norms; zero norms are counted
  // separately since they have no logarithm.
  std::vector<double> bin_edges;   // size bins + 1 (empty if no positive norm)
  std::vector<std::size_t> bin_counts;  // size bins
  std::size_t zero_count = 0;
  std::size_t count = 0;

  double median() const { return quantiles[2]; }
};

GradNormSummary summarize_norms(std::vector<double> norms,
                                std::size_t bins = 16);
GradNormSummary grad_norm_distribution(const Matrix& grads,
                                       std::size_t bins = 16);

struct ClassAccuracy {
  int class_id = 0;
  std::size_t count = 0;
  double accuracy = 0.0;
};

// Accuracy within each class present in `labels`, ascending class id.
std::vector<ClassAccuracy> per_class_accuracy(std::span<const int> predictions,
                                              std::span<const int> labels);

// Unweighted mean of per-class accuracies (balanced accuracy).
double macro_accuracy(std::span<const int> predictions,
                      std::span<const int> labels);

}  // namespace dpopt::diagnostics

#endif  // DPOPT_DIAGNOSTICS_HPP_
