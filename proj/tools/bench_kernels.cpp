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

// Compares the OpenMP kernels against their serial twins: wall time for both
// and the max absolute difference, which must print as 0 everywhere.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <span>
#include <vector>

#include "dpopt/dpcore.hpp"
#include "dpopt/harness.hpp"
#include "dpopt/matrix.hpp"
#include "dpopt/parallel.hpp"
#include "dpopt/rng.hpp"
#include "dpopt/serial_ref.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto start = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto stop = Clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() /
         reps;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double max = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    max = std::max(max, std::abs(a[i] - b[i]));
  }
  return max;
}

double max_abs_diff(const dpopt::Matrix& a, const dpopt::Matrix& b) {
  return max_abs_diff(
      std::span<const double>(a.data(), a.rows() * a.cols()),
      std::span<const double>(b.data(), b.rows() * b.cols()));
}

void report(const char* name, double serial_ms, double parallel_ms,
            double diff) {
  std::printf("%-18s %10.3f ms %10.3f ms %8.2fx %12.3g\n", name, serial_ms,
              parallel_ms, serial_ms / parallel_ms, diff);
}

}  // namespace

int main() {
  constexpr std::size_t kRows = 20000;
  constexpr std::size_t kCols = 256;
  constexpr int kReps = 10;

  dpopt::RngStream rng(42, 0);
  dpopt::Matrix grads(kRows, kCols);
  rng.fill_gaussian({grads.data(), kRows * kCols});

  std::printf("threads: %d\n", dpopt::max_threads());
  std::printf("%-18s %13s %13s %9s %12s\n", "kernel", "serial", "parallel",
              "speedup", "max|diff|");

  {
    std::vector<double> serial, parallel;
    const double serial_ms = time_ms(
        [&] { serial = dpopt::serial_ref::row_norms(grads); }, kReps);
    const double parallel_ms =
        time_ms([&] { parallel = dpopt::row_norms(grads); }, kReps);
    report("row_norms", serial_ms, parallel_ms,
           max_abs_diff(serial, parallel));
  }

  {
    const dpopt::ClipMode clip = dpopt::ClipMode::normalized(1.0);
    dpopt::Matrix serial, parallel;
    const double serial_ms = time_ms(
        [&] { serial = dpopt::serial_ref::clip_batch(grads, clip); }, kReps);
    const double parallel_ms =
        time_ms([&] { parallel = dpopt::clip_batch(grads, clip); }, kReps);
    report("clip_batch", serial_ms, parallel_ms,
           max_abs_diff(serial, parallel));
  }

  {
    std::vector<double> serial, parallel;
    const double serial_ms = time_ms(
        [&] { serial = dpopt::serial_ref::sum_rows(grads); }, kReps);
    const double parallel_ms =
        time_ms([&] { parallel = dpopt::sum_rows(grads); }, kReps);
    report("sum_rows", serial_ms, parallel_ms,
           max_abs_diff(serial, parallel));
  }

  {
    dpopt::harness::SyntheticTaskConfig config;
    config.train_size = 8000;
    config.test_size = 100;
    const dpopt::harness::Task task = dpopt::harness::gen_task(config);
    std::vector<double> theta(task.param_dim(), 0.0);
    dpopt::RngStream theta_rng(7, 0);
    theta_rng.fill_gaussian(theta);

    dpopt::harness::LossAndGrads serial, parallel;
    const double serial_ms = time_ms(
        [&] {
          serial = dpopt::harness::serial_ref::loss_and_grads(
              theta, task.train.features, task.train.labels,
              task.config.num_classes);
        },
        kReps);
    const double parallel_ms = time_ms(
        [&] {
          parallel = dpopt::harness::loss_and_grads(
              theta, task.train.features, task.train.labels,
              task.config.num_classes);
        },
        kReps);
    const double diff =
        std::max(max_abs_diff(serial.per_example, parallel.per_example),
                 std::abs(serial.mean_loss - parallel.mean_loss));
    report("loss_and_grads", serial_ms, parallel_ms, diff);
  }

  return 0;
}
