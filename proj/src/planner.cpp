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

#include "dpopt/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "dpopt/accountant.hpp"
#include "dpopt/errors.hpp"

namespace dpopt::planner {

long steps_for(std::size_t dataset_size, int epochs, long batch_size) {
  if (dataset_size == 0 || epochs < 1) {
    throw std::invalid_argument("steps_for: need dataset_size >= 1, epochs >= 1");
  }
  const auto n = static_cast<long>(dataset_size);
  if (batch_size < 1 || batch_size > n) {
    throw std::invalid_argument("steps_for: batch size must lie in [1, N]");
  }
  const long total = static_cast<long>(epochs) * n;
  return (total + batch_size - 1) / batch_size;
}

std::vector<BatchPlanRow> plan(const PlanConfig& config) {
  if (config.dataset_size == 0 || config.epochs < 1) {
    throw ConfigError("plan: dataset_size and epochs must be positive");
  }
  if (config.epsilon_targets.empty() || config.batch_candidates.empty()) {
    throw ConfigError("plan: epsilon targets and batch candidates required");
  }
  if (config.min_steps < 1 || config.plateau_tolerance < 0.0) {
    throw ConfigError("plan: min_steps >= 1 and plateau_tolerance >= 0 required");
  }
  const auto n = static_cast<long>(config.dataset_size);
  for (long b : config.batch_candidates) {
    if (b < 1 || b > n) {
      throw ConfigError("plan: batch candidate " + std::to_string(b) +
                        " outside [1, N]");
    }
  }

  std::vector<double> epsilons = config.epsilon_targets;
  std::sort(epsilons.begin(), epsilons.end());
  epsilons.erase(std::unique(epsilons.begin(), epsilons.end()),
                 epsilons.end());
  std::vector<long> batches = config.batch_candidates;
  std::sort(batches.begin(), batches.end());
  batches.erase(std::unique(batches.begin(), batches.end()), batches.end());

  std::vector<BatchPlanRow> rows;
  rows.reserve(epsilons.size() * batches.size());
  for (double eps : epsilons) {
    const std::size_t first = rows.size();
    for (long b : batches) {
      BatchPlanRow row;
      row.epsilon = eps;
      row.batch_size = b;
      row.sampling_rate = static_cast<double>(b) / static_cast<double>(n);
      row.steps = steps_for(config.dataset_size, config.epochs, b);
      row.meets_min_steps = row.steps >= config.min_steps;
      try {
        row.sigma = accountant::calibrate_sigma(eps, config.delta,
                                                row.sampling_rate, row.steps);
        row.cumulative_noise =
            row.sigma * std::sqrt(static_cast<double>(row.steps));
        row.effective_noise_std = row.sigma / row.sampling_rate;
        row.per_step_avg_noise_std = row.sigma / static_cast<double>(b);
      } catch (const CalibrationError&) {
        row.calibrated = false;
        row.sigma = std::numeric_limits<double>::quiet_NaN();
        row.cumulative_noise = row.sigma;
        row.effective_noise_std = row.sigma;
        row.per_step_avg_noise_std = row.sigma;
      }
      rows.push_back(row);
    }
    try {
      const long best = recommend({rows.data() + first, batches.size()},
                                  config.min_steps, config.plateau_tolerance);
      for (std::size_t i = first; i < rows.size(); ++i) {
        rows[i].recommended = rows[i].batch_size == best;
      }
    } catch (const NumericError&) {
      // No candidate passes the step floor for this epsilon; rows keep
      // recommended = false.
    }
  }
  return rows;
}

long recommend(std::span<const BatchPlanRow> rows, long min_steps,
               double plateau_tolerance) {
  if (plateau_tolerance < 0.0) {
    throw std::invalid_argument("recommend: plateau_tolerance must be >= 0");
  }
  double min_noise = std::numeric_limits<double>::infinity();
  bool any = false;
  for (const BatchPlanRow& row : rows) {
    if (!row.calibrated || row.steps < min_steps) continue;
    any = true;
    min_noise = std::min(min_noise, row.cumulative_noise);
  }
  if (!any) {
    throw NumericError(
        "recommend: no batch candidate reaches the minimum step count; "
        "raise epochs or shrink the batch candidates");
  }
  const double cutoff = (1.0 + plateau_tolerance) * min_noise;
  long best = 0;
  bool found = false;
  for (const BatchPlanRow& row : rows) {
    if (!row.calibrated || row.steps < min_steps) continue;
    if (row.cumulative_noise <= cutoff &&
        (!found || row.batch_size < best)) {
      best = row.batch_size;
      found = true;
    }
  }
  return best;
}

}  // namespace dpopt::planner
