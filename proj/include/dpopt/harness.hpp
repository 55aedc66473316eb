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

#ifndef DPOPT_HARNESS_HPP_
#define DPOPT_HARNESS_HPP_

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dpopt/diagnostics.hpp"
#include "dpopt/dpcore.hpp"
#include "dpopt/matrix.hpp"

namespace dpopt::harness {

// Synthetic transfer-learning task: class-conditional Gaussian blobs in a
// raw space, pushed through a frozen random backbone whose quality knob
// controls feature noise. Only a linear softmax head is trained.
struct SyntheticTaskConfig {
  int num_classes = 4;
  std::size_t raw_dim = 24;
  std::size_t feature_dim = 16;
  std::size_t train_size = 2000;
  std::size_t test_size = 1000;
  // Sampling probabilities per class; must sum to 1. Empty means uniform.
  std::vector<double> class_weights;
  double class_separation = 3.0;
  // In (0, 1]; feature noise std is 1 - quality, so 1 is a noiseless
  // backbone.
  double backbone_quality = 1.0;
  std::uint64_t seed = 1;
};

// Frozen feature extractor: tanh of a fixed random projection plus additive
// noise that is a pure function of (input, seed), so repeated evaluation of
// the same input is identical. The projection depends on the seed only, not
// on the quality knob.
class Backbone {
 public:
  Backbone() = default;
  Backbone(std::size_t raw_dim, std::size_t feature_dim, double quality,
           std::uint64_t seed);

  std::vector<double> apply(std::span<const double> raw) const;
  const Matrix& projection() const { return projection_; }
  double quality() const { return quality_; }

 private:
  Matrix projection_;  // feature_dim x raw_dim
  double quality_ = 1.0;
  std::uint64_t seed_ = 0;
};

struct Dataset {
  Matrix features;  // one row per example, backbone output
  std::vector<int> labels;
};

struct Task {
  SyntheticTaskConfig config;
  Backbone backbone;
  Dataset train;
  Dataset test;

  std::size_t param_dim() const {
    return config.feature_dim * static_cast<std::size_t>(config.num_classes) +
           static_cast<std::size_t>(config.num_classes);
  }
};

Task gen_task(const SyntheticTaskConfig& config);

// Mean softmax cross-entropy and analytic per-example gradients of the
// linear head. theta is laid out as K weight rows of feature_dim followed by
// K biases; gradient rows use the same layout.
struct LossAndGrads {
  double mean_loss = 0.0;
  Matrix per_example;  // rows x param_dim
};

LossAndGrads loss_and_grads(std::span<const double> theta,
                            const Matrix& features,
                            std::span<const int> labels, int num_classes);

double mean_loss(std::span<const double> theta, const Matrix& features,
                 std::span<const int> labels, int num_classes);

// Argmax class per row; ties go to the smaller class id.
std::vector<int> predict(std::span<const double> theta, const Matrix& features,
                         int num_classes);

namespace serial_ref {
// Plain-loop twin of loss_and_grads; bit-identical output.
LossAndGrads loss_and_grads(std::span<const double> theta,
                            const Matrix& features,
                            std::span<const int> labels, int num_classes);
}  // namespace serial_ref

struct TrainConfig {
  double eta = 0.1;
  long batch_size = 128;  // expected batch size; q = B / N
  ClipMode clip = ClipMode::normalized(1.0);
  int epochs = 4;
  // Exactly one of the two may be positive: epsilon > 0 calibrates sigma for
  // (q, T); otherwise sigma is used directly, with 0 meaning non-private.
  double epsilon = 0.0;
  double sigma = 0.0;
  double delta = 1e-5;
  OptimizerState::Kind optimizer = OptimizerState::Kind::kSgd;
  std::uint64_t seed = 1;
  // Drop theta and the final gradient matrix from the metrics (sweeps).
  bool keep_artifacts = true;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double test_macro_accuracy = 0.0;
  std::vector<diagnostics::ClassAccuracy> test_class_accuracy;
  diagnostics::GradNormSummary grad_norms;  // full train set, end of epoch
};

struct RunMetrics {
  std::vector<EpochRecord> epochs;
  long steps = 0;
  double sigma = 0.0;
  double sampling_rate = 0.0;
  // Epsilon of (sigma, q, steps) from the accountant; infinity when running
  // without noise.
  double realized_epsilon = std::numeric_limits<double>::infinity();
  bool diverged = false;
  std::vector<double> theta;
  Matrix final_train_gradients;

  double final_loss() const {
    return epochs.empty() ? std::numeric_limits<double>::quiet_NaN()
                          : epochs.back().train_loss;
  }
  double final_macro_accuracy() const {
    return epochs.empty() ? std::numeric_limits<double>::quiet_NaN()
                          : epochs.back().test_macro_accuracy;
  }
  double final_median_grad_norm() const {
    return epochs.empty() ? std::numeric_limits<double>::quiet_NaN()
                          : epochs.back().grad_norms.median();
  }
};

// DP training loop: T = ceil(E N / B) Poisson-sampled noisy updates from a
// zero-initialized head, per-epoch metrics, divergence detection (train loss
// above 1e6 or non-finite marks the run diverged and stops it early).
RunMetrics train(const Task& task, const TrainConfig& config);

struct SweepConfig {
  std::vector<double> etas{0.1};
  std::vector<long> batch_sizes{128};
  std::vector<ClipMode> clips{ClipMode::normalized(1.0)};
  std::vector<double> epsilons{1.0};
  int epochs = 4;
  double delta = 1e-5;
  OptimizerState::Kind optimizer = OptimizerState::Kind::kSgd;
  int repeats = 5;
  std::uint64_t master_seed = 1;
};

struct SweepRecord {
  std::size_t config_index = 0;
  double eta = 0.0;
  long batch_size = 0;
  ClipMode clip;
  double epsilon = 0.0;
  int repeat = 0;
  std::uint64_t seed = 0;
  bool calibration_failed = false;
  RunMetrics metrics;

  bool failed() const { return calibration_failed || metrics.diverged; }
};

struct SweepAggregate {
  std::size_t config_index = 0;
  double eta = 0.0;
  long batch_size = 0;
  ClipMode clip;
  double epsilon = 0.0;
  int runs = 0;
  int failed = 0;  // diverged or uncalibratable
  // Over successful runs; NaN when every repeat failed.
  double mean_macro_accuracy = 0.0;
  double min_macro_accuracy = 0.0;
  double max_macro_accuracy = 0.0;
  double mean_final_loss = 0.0;
};

struct BestConfig {
  double epsilon = 0.0;
  double eta = 0.0;
  long batch_size = 0;
  ClipMode clip;
  double mean_macro_accuracy = 0.0;
};

struct SweepResults {
  std::vector<SweepRecord> records;
  std::vector<SweepAggregate> aggregates;
  // Per epsilon, the configuration with the best mean macro accuracy; ties
  // go to the smaller clip parameter, then the smaller batch size.
  std::vector<BestConfig> best;
};

// Full grid epsilon x eta x batch x clip, `repeats` runs each with seeds
// derived from (master seed, config index, repeat). Runs execute in
// parallel; per-run failures are recorded inline, results are independent
// of the execution order.
SweepResults sweep(const Task& task, const SweepConfig& config);

}  // namespace dpopt::harness

#endif  // DPOPT_HARNESS_HPP_
