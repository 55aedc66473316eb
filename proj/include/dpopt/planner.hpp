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

#ifndef DPOPT_PLANNER_HPP_
#define DPOPT_PLANNER_HPP_

#include <cstddef>
#include <span>
#include <vector>

namespace dpopt::planner {

// Number of optimization steps for E epochs at expected batch size B over N
// examples: ceil(E * N / B). The ceiling never under-counts steps, so the
// privacy accounting stays conservative.
long steps_for(std::size_t dataset_size, int epochs, long batch_size);

struct PlanConfig {
  std::size_t dataset_size = 0;
  int epochs = 1;
  double delta = 1e-5;
  std::vector<double> epsilon_targets;
  std::vector<long> batch_candidates;
  long min_steps = 20;
  double plateau_tolerance = 0.05;
};

struct BatchPlanRow {
  double epsilon = 0.0;
  long batch_size = 0;
  double sampling_rate = 0.0;          // q = B / N
  long steps = 0;                      // T = ceil(E N / B)
  double sigma = 0.0;                  // calibrated noise multiplier
  double cumulative_noise = 0.0;       // sigma * sqrt(T)
  double effective_noise_std = 0.0;    // sigma / q
  double per_step_avg_noise_std = 0.0; // sigma / B
  bool calibrated = true;
  bool meets_min_steps = true;
  bool recommended = false;
};

// One row per (epsilon, batch size), epsilon ascending then batch size
// ascending; candidates deduplicated. Per-row calibration failures are
// flagged, not fatal. Recommendation flags are filled per epsilon where a
// recommendation exists.
std::vector<BatchPlanRow> plan(const PlanConfig& config);

// Recommendation rule on rows sharing one epsilon: among calibrated rows with
// steps >= min_steps, find the minimum cumulative noise m and return the
// smallest batch size whose cumulative noise is <= (1 + plateau_tolerance)
// * m. More steps at no extra accumulated noise. Invariant to row order and
// duplicates; throws NumericError when no row passes the step floor.
long recommend(std::span<const BatchPlanRow> rows, long min_steps,
               double plateau_tolerance);

}  // namespace dpopt::planner

#endif  // DPOPT_PLANNER_HPP_
