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
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "dpopt/accountant.hpp"
#include "dpopt/errors.hpp"

using namespace dpopt;
using namespace dpopt::planner;

namespace {

BatchPlanRow make_row(long batch, long steps, double cumulative,
                      bool calibrated = true) {
  BatchPlanRow row;
  row.batch_size = batch;
  row.steps = steps;
  row.cumulative_noise = cumulative;
  row.calibrated = calibrated;
  return row;
}

}  // namespace

TEST_CASE("steps_for takes the ceiling of E N / B") {
  CHECK(steps_for(50000, 8, 1024) == 391);
  CHECK(steps_for(100, 1, 100) == 1);
  CHECK(steps_for(100, 1, 64) == 2);
  CHECK(steps_for(100, 2, 50) == 4);
  CHECK(steps_for(10, 3, 10) == 3);
  CHECK(steps_for(7, 1, 2) == 4);

  CHECK_THROWS_AS(steps_for(0, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(steps_for(10, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(steps_for(10, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(steps_for(10, 1, 11), std::invalid_argument);
}

TEST_CASE("plan emits sorted, deduplicated rows with derived columns") {
  PlanConfig config;
  config.dataset_size = 1000;
  config.epochs = 2;
  config.epsilon_targets = {1.0, 0.5, 1.0};
  config.batch_candidates = {128, 32, 128, 1000};
  const std::vector<BatchPlanRow> rows = plan(config);
  REQUIRE(rows.size() == 6);

  const std::vector<double> want_eps{0.5, 0.5, 0.5, 1.0, 1.0, 1.0};
  const std::vector<long> want_batch{32, 128, 1000, 32, 128, 1000};
  const std::vector<long> want_steps{63, 16, 2, 63, 16, 2};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].epsilon == want_eps[i]);
    CHECK(rows[i].batch_size == want_batch[i]);
    CHECK(rows[i].steps == want_steps[i]);
    CHECK(rows[i].sampling_rate ==
          static_cast<double>(want_batch[i]) / 1000.0);
    CHECK(rows[i].calibrated);
    CHECK(rows[i].meets_min_steps == (rows[i].steps >= 20));
    CHECK(rows[i].cumulative_noise ==
          rows[i].sigma * std::sqrt(static_cast<double>(rows[i].steps)));
    CHECK(rows[i].effective_noise_std ==
          rows[i].sigma / rows[i].sampling_rate);
    CHECK(rows[i].per_step_avg_noise_std ==
          rows[i].sigma / static_cast<double>(rows[i].batch_size));
  }
  // The full-batch row runs at sampling rate one for exactly E steps.
  CHECK(rows[2].sampling_rate == 1.0);
  CHECK(rows[2].steps == 2);
  // Wider batches need fewer steps, and per-row calibration really enforces
  // the target.
  for (const BatchPlanRow& row : rows) {
    const double realized =
        accountant::account(row.sigma, row.sampling_rate, row.steps, 1e-5);
    CHECK(std::abs(realized - row.epsilon) <= 1e-3);
  }
}

TEST_CASE("plan regression values stay put") {
  PlanConfig config;
  config.dataset_size = 50000;
  config.epochs = 8;
  config.epsilon_targets = {0.5};
  config.batch_candidates = {256, 512, 1024, 2048, 4096, 8192, 16384};
  const std::vector<BatchPlanRow> rows = plan(config);
  REQUIRE(rows.size() == 7);
  CHECK(rows[0].cumulative_noise ==
        doctest::Approx(84.7024302948).epsilon(1e-6));
  CHECK(rows[5].cumulative_noise ==
        doctest::Approx(79.9678956174).epsilon(1e-6));

  double lo = rows[0].cumulative_noise, hi = lo;
  for (const BatchPlanRow& row : rows) {
    lo = std::min(lo, row.cumulative_noise);
    hi = std::max(hi, row.cumulative_noise);
  }
  CHECK(hi / lo ==
        doctest::Approx(84.7024302948 / 79.9678956174).epsilon(1e-6));

  // sigma / q falls monotonically with the batch size: the effective noise
  // column on its own always argues for the largest batch.
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    CHECK(rows[i + 1].effective_noise_std < rows[i].effective_noise_std);
  }

  // Exactly one recommended row, and it is what recommend() returns.
  const long best = recommend(rows, config.min_steps,
                              config.plateau_tolerance);
  int flagged = 0;
  for (const BatchPlanRow& row : rows) {
    if (row.recommended) {
      ++flagged;
      CHECK(row.batch_size == best);
    }
  }
  CHECK(flagged == 1);
}

TEST_CASE("noise multipliers shrink as epsilon grows") {
  PlanConfig config;
  config.dataset_size = 20000;
  config.epochs = 4;
  config.epsilon_targets = {0.5, 1.0, 2.0, 4.0};
  config.batch_candidates = {256, 1024};
  const std::vector<BatchPlanRow> rows = plan(config);
  REQUIRE(rows.size() == 8);
  for (long batch : {256L, 1024L}) {
    double prev = std::numeric_limits<double>::infinity();
    for (const BatchPlanRow& row : rows) {
      if (row.batch_size != batch) continue;
      CHECK(row.sigma < prev);
      prev = row.sigma;
    }
  }
}

TEST_CASE("recommend picks the smallest batch on the plateau") {
  std::vector<BatchPlanRow> rows{
      make_row(100, 100, 10.0),
      make_row(200, 50, 9.0),
      make_row(400, 25, 8.9),
      make_row(800, 12, 5.0),  // below the step floor; must not matter
  };
  CHECK(recommend(rows, 20, 0.05) == 200);

  // Zero tolerance narrows the plateau to the argmin itself.
  CHECK(recommend(rows, 20, 0.0) == 400);

  // A wide tolerance widens it back to the smallest feasible batch.
  CHECK(recommend(rows, 20, 0.2) == 100);

  // Ties settle on the smaller batch.
  std::vector<BatchPlanRow> tied{
      make_row(200, 50, 9.0),
      make_row(100, 100, 9.0),
  };
  CHECK(recommend(tied, 20, 0.0) == 100);
}

TEST_CASE("recommend is invariant to row order and duplicates") {
  std::vector<BatchPlanRow> rows{
      make_row(100, 100, 10.0),
      make_row(200, 50, 9.0),
      make_row(400, 25, 8.9),
  };
  const long want = recommend(rows, 20, 0.05);
  std::reverse(rows.begin(), rows.end());
  CHECK(recommend(rows, 20, 0.05) == want);
  rows.push_back(rows.front());
  rows.push_back(rows.back());
  CHECK(recommend(rows, 20, 0.05) == want);
}

TEST_CASE("recommend skips uncalibrated rows and may run out of rows") {
  std::vector<BatchPlanRow> rows{
      make_row(100, 100, 10.0),
      make_row(200, 50, 1.0, /*calibrated=*/false),
  };
  rows[1].sigma = std::numeric_limits<double>::quiet_NaN();
  rows[1].cumulative_noise = rows[1].sigma;
  CHECK(recommend(rows, 20, 0.05) == 100);

  CHECK_THROWS_AS(recommend(rows, 200, 0.05), NumericError);
  CHECK_THROWS_AS(recommend(rows, 20, -0.1), std::invalid_argument);

  std::vector<BatchPlanRow> none;
  CHECK_THROWS_AS(recommend(none, 1, 0.05), NumericError);
}

TEST_CASE("an unreachable target flags rows instead of failing the plan") {
  PlanConfig config;
  config.dataset_size = 1000;
  config.epochs = 1;
  config.epsilon_targets = {0.01};
  config.batch_candidates = {500, 1000};
  const std::vector<BatchPlanRow> rows = plan(config);
  REQUIRE(rows.size() == 2);
  for (const BatchPlanRow& row : rows) {
    CHECK(row.calibrated == false);
    CHECK(std::isnan(row.sigma));
    CHECK(std::isnan(row.cumulative_noise));
    CHECK(row.recommended == false);
  }
}

TEST_CASE("plan validates its configuration") {
  PlanConfig good;
  good.dataset_size = 100;
  good.epochs = 1;
  good.epsilon_targets = {1.0};
  good.batch_candidates = {10};
  CHECK_NOTHROW(plan(good));

  PlanConfig bad = good;
  bad.dataset_size = 0;
  CHECK_THROWS_AS(plan(bad), ConfigError);
  bad = good;
  bad.epochs = 0;
  CHECK_THROWS_AS(plan(bad), ConfigError);
  bad = good;
  bad.epsilon_targets.clear();
  CHECK_THROWS_AS(plan(bad), ConfigError);
  bad = good;
  bad.batch_candidates = {};
  CHECK_THROWS_AS(plan(bad), ConfigError);
  bad = good;
  bad.batch_candidates = {101};
  CHECK_THROWS_AS(plan(bad), ConfigError);
  bad = good;
  bad.batch_candidates = {0};
  CHECK_THROWS_AS(plan(bad), ConfigError);
  bad = good;
  bad.min_steps = 0;
  CHECK_THROWS_AS(plan(bad), ConfigError);
  bad = good;
  bad.plateau_tolerance = -0.5;
  CHECK_THROWS_AS(plan(bad), ConfigError);
}
