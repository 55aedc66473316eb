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

#include "dpopt/harness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <tuple>

#include "dpopt/accountant.hpp"
#include "dpopt/errors.hpp"
#include "dpopt/parallel.hpp"
#include "dpopt/planner.hpp"
#include "dpopt/rng.hpp"

namespace dpopt::harness {
namespace {

// Sub-stream ids so every consumer of the task seed draws from its own
// sequence.
constexpr std::uint64_t kMeansStream = 1;
constexpr std::uint64_t kTrainStream = 2;
constexpr std::uint64_t kTestStream = 3;
constexpr std::uint64_t kBackboneStream = 4;
constexpr std::uint64_t kFeatureNoiseStream = 5;
constexpr std::uint64_t kTrainLoopStream = 6;

void check_task_config(const SyntheticTaskConfig& c) {
  if (c.num_classes < 2) throw ConfigError("gen_task: need >= 2 classes");
  if (c.raw_dim < 1 || c.feature_dim < 1) {
    throw ConfigError("gen_task: dimensions must be positive");
  }
  if (c.train_size < static_cast<std::size_t>(c.num_classes) ||
      c.test_size < 1) {
    throw ConfigError("gen_task: dataset sizes too small");
  }
  if (!c.class_weights.empty()) {
    if (c.class_weights.size() != static_cast<std::size_t>(c.num_classes)) {
      throw ConfigError("gen_task: class_weights size != num_classes");
    }
    double sum = 0.0;
    for (double w : c.class_weights) {
      if (!(w > 0.0)) throw ConfigError("gen_task: class weights must be > 0");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-8) {
      throw ConfigError("gen_task: class weights must sum to 1");
    }
  }
  if (!(c.class_separation >= 0.0) || !std::isfinite(c.class_separation)) {
    throw ConfigError("gen_task: class_separation must be >= 0");
  }
  if (!(c.backbone_quality > 0.0 && c.backbone_quality <= 1.0)) {
    throw ConfigError("gen_task: backbone_quality must lie in (0, 1]");
  }
}

int draw_label(const std::vector<double>& weights, int num_classes,
               RngStream& rng) {
  const double u = rng.uniform();
  if (weights.empty()) {
    return std::min(static_cast<int>(u * num_classes), num_classes - 1);
  }
  double cum = 0.0;
  for (int k = 0; k < num_classes; ++k) {
    cum += weights[k];
    if (u < cum) return k;
  }
  return num_classes - 1;
}

Dataset sample_dataset(const SyntheticTaskConfig& c, const Backbone& backbone,
                       const Matrix& class_means, std::size_t size,
                       std::uint64_t stream) {
  Dataset ds;
  ds.features = Matrix(size, c.feature_dim);
  ds.labels.resize(size);
  RngStream rng(c.seed, stream);
  std::vector<double> raw(c.raw_dim);
  for (std::size_t i = 0; i < size; ++i) {
    const int label = draw_label(c.class_weights, c.num_classes, rng);
    ds.labels[i] = label;
    for (std::size_t j = 0; j < c.raw_dim; ++j) {
      raw[j] = class_means(label, j) + rng.gaussian();
    }
    const std::vector<double> feat = backbone.apply(raw);
    std::copy(feat.begin(), feat.end(), ds.features.row(i).begin());
  }
  return ds;
}

void check_every_class_present(const Dataset& ds, int num_classes,
                               const char* which) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int label : ds.labels) ++counts[label];
  for (int k = 0; k < num_classes; ++k) {
    if (counts[k] == 0) {
      throw ConfigError(std::string("gen_task: class ") + std::to_string(k) +
                        " has no " + which +
                        " examples; increase sizes or weights");
    }
  }
}

// Shared per-example softmax computation. Writes the gradient row when
// grad_row is non-empty.
double example_loss_grad(std::span<const double> theta,
                         std::span<const double> x, int label,
                         int num_classes, std::span<double> grad_row,
                         std::span<double> logits) {
  const std::size_t f = x.size();
  const std::size_t weights = f * static_cast<std::size_t>(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    logits[c] = theta[weights + c] +
                dot(theta.subspan(static_cast<std::size_t>(c) * f, f), x);
  }
  double max_logit = logits[0];
  for (int c = 1; c < num_classes; ++c) {
    max_logit = std::max(max_logit, logits[c]);
  }
  double sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    sum += std::exp(logits[c] - max_logit);
  }
  const double log_sum = std::log(sum);
  const double loss = log_sum - (logits[label] - max_logit);
  if (!grad_row.empty()) {
    for (int c = 0; c < num_classes; ++c) {
      const double p = std::exp(logits[c] - max_logit) / sum;
      const double residual = p - (c == label ? 1.0 : 0.0);
      for (std::size_t j = 0; j < f; ++j) {
        grad_row[static_cast<std::size_t>(c) * f + j] = residual * x[j];
      }
      grad_row[weights + c] = residual;
    }
  }
  return loss;
}

void check_head_inputs(std::span<const double> theta, const Matrix& features,
                       std::span<const int> labels, int num_classes) {
  if (num_classes < 2) {
    throw std::invalid_argument("loss_and_grads: need >= 2 classes");
  }
  if (features.rows() == 0) {
    throw std::invalid_argument("loss_and_grads: empty batch");
  }
  const std::size_t dim =
      features.cols() * static_cast<std::size_t>(num_classes) +
      static_cast<std::size_t>(num_classes);
  if (theta.size() != dim) {
    throw std::invalid_argument("loss_and_grads: theta has size " +
                                std::to_string(theta.size()) + ", expected " +
                                std::to_string(dim));
  }
  if (labels.size() != features.rows()) {
    throw std::invalid_argument("loss_and_grads: labels/rows mismatch");
  }
  for (int label : labels) {
    if (label < 0 || label >= num_classes) {
      throw std::invalid_argument("loss_and_grads: label out of range");
    }
  }
}

double sum_in_order(const std::vector<double>& values) {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

}  // namespace

Backbone::Backbone(std::size_t raw_dim, std::size_t feature_dim,
                   double quality, std::uint64_t seed)
    : projection_(feature_dim, raw_dim), quality_(quality), seed_(seed) {
  if (!(quality > 0.0 && quality <= 1.0)) {
    throw ConfigError("Backbone: quality must lie in (0, 1]");
  }
  RngStream rng(seed, kBackboneStream);
  const double scale = 1.0 / std::sqrt(static_cast<double>(raw_dim));
  for (std::size_t i = 0; i < feature_dim; ++i) {
    for (std::size_t j = 0; j < raw_dim; ++j) {
      projection_(i, j) = scale * rng.gaussian();
    }
  }
}

std::vector<double> Backbone::apply(std::span<const double> raw) const {
  if (raw.size() != projection_.cols()) {
    throw std::invalid_argument("Backbone::apply: raw dimension mismatch");
  }
  std::vector<double> out(projection_.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::tanh(dot(projection_.row(i), raw));
  }
  const double noise_std = 1.0 - quality_;
  if (noise_std > 0.0) {
    // Noise is a function of the input bits and the seed, so the mapping
    // raw -> features stays deterministic.
    std::uint64_t h = seed_;
    for (double v : raw) h = mix_seed(h, std::bit_cast<std::uint64_t>(v));
    RngStream noise(h, kFeatureNoiseStream);
    for (double& v : out) v += noise_std * noise.gaussian();
  }
  return out;
}

Task gen_task(const SyntheticTaskConfig& config) {
  check_task_config(config);
  Task task;
  task.config = config;
  task.backbone = Backbone(config.raw_dim, config.feature_dim,
                           config.backbone_quality, config.seed);

  // Class means: separation times a random unit direction per class.
  Matrix means(config.num_classes, config.raw_dim);
  RngStream rng(config.seed, kMeansStream);
  for (int k = 0; k < config.num_classes; ++k) {
    auto row = means.row(k);
    for (double& v : row) v = rng.gaussian();
    const double norm = l2_norm(row);
    const double scale = norm > 0.0 ? config.class_separation / norm : 0.0;
    for (double& v : row) v *= scale;
  }

  task.train = sample_dataset(config, task.backbone, means, config.train_size,
                              kTrainStream);
  task.test = sample_dataset(config, task.backbone, means, config.test_size,
                             kTestStream);
  check_every_class_present(task.train, config.num_classes, "train");
  check_every_class_present(task.test, config.num_classes, "test");
  return task;
}

LossAndGrads loss_and_grads(std::span<const double> theta,
                            const Matrix& features,
                            std::span<const int> labels, int num_classes) {
  check_head_inputs(theta, features, labels, num_classes);
  LossAndGrads out;
  out.per_example = Matrix(features.rows(), theta.size());
  std::vector<double> losses(features.rows());
  parallel_for(features.rows(), [&](std::size_t i) {
    std::vector<double> logits(num_classes);
    losses[i] = example_loss_grad(theta, features.row(i), labels[i],
                                  num_classes, out.per_example.row(i), logits);
  });
  out.mean_loss = sum_in_order(losses) / static_cast<double>(features.rows());
  return out;
}

namespace serial_ref {

LossAndGrads loss_and_grads(std::span<const double> theta,
                            const Matrix& features,
                            std::span<const int> labels, int num_classes) {
  check_head_inputs(theta, features, labels, num_classes);
  LossAndGrads out;
  out.per_example = Matrix(features.rows(), theta.size());
  std::vector<double> losses(features.rows());
  std::vector<double> logits(num_classes);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    losses[i] = example_loss_grad(theta, features.row(i), labels[i],
                                  num_classes, out.per_example.row(i), logits);
  }
  out.mean_loss = sum_in_order(losses) / static_cast<double>(features.rows());
  return out;
}

}  // namespace serial_ref

double mean_loss(std::span<const double> theta, const Matrix& features,
                 std::span<const int> labels, int num_classes) {
  check_head_inputs(theta, features, labels, num_classes);
  std::vector<double> losses(features.rows());
  parallel_for(features.rows(), [&](std::size_t i) {
    std::vector<double> logits(num_classes);
    losses[i] = example_loss_grad(theta, features.row(i), labels[i],
                                  num_classes, {}, logits);
  });
  return sum_in_order(losses) / static_cast<double>(features.rows());
}

std::vector<int> predict(std::span<const double> theta, const Matrix& features,
                         int num_classes) {
  if (num_classes < 2) {
    throw std::invalid_argument("predict: need >= 2 classes");
  }
  const std::size_t f = features.cols();
  const std::size_t weights = f * static_cast<std::size_t>(num_classes);
  if (theta.size() != weights + static_cast<std::size_t>(num_classes)) {
    throw std::invalid_argument("predict: theta dimension mismatch");
  }
  std::vector<int> out(features.rows());
  parallel_for(features.rows(), [&](std::size_t i) {
    const auto x = features.row(i);
    int best = 0;
    double best_logit =
        theta[weights] + dot(theta.subspan(0, f), x);
    for (int c = 1; c < num_classes; ++c) {
      const double logit =
          theta[weights + c] +
          dot(theta.subspan(static_cast<std::size_t>(c) * f, f), x);
      if (logit > best_logit) {
        best_logit = logit;
        best = c;
      }
    }
    out[i] = best;
  });
  return out;
}

RunMetrics train(const Task& task, const TrainConfig& config) {
  const std::size_t n = task.train.features.rows();
  const int k = task.config.num_classes;
  if (config.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (config.batch_size < 1 ||
      config.batch_size > static_cast<long>(n)) {
    throw ConfigError("train: batch_size must lie in [1, train_size]");
  }
  if (!std::isfinite(config.eta)) throw ConfigError("train: eta not finite");
  if (config.epsilon < 0.0 || config.sigma < 0.0) {
    throw ConfigError("train: epsilon and sigma must be >= 0");
  }
  if (config.epsilon > 0.0 && config.sigma > 0.0) {
    throw ConfigError("train: set either an epsilon target or sigma, not both");
  }
  if (!(config.clip.param > 0.0)) {
    throw ConfigError("train: clip parameter must be positive");
  }

  RunMetrics metrics;
  metrics.sampling_rate =
      static_cast<double>(config.batch_size) / static_cast<double>(n);
  const long total_steps =
      planner::steps_for(n, config.epochs, config.batch_size);
  metrics.sigma = config.epsilon > 0.0
                      ? accountant::calibrate_sigma(config.epsilon,
                                                    config.delta,
                                                    metrics.sampling_rate,
                                                    total_steps)
                      : config.sigma;
  if (metrics.sigma > 0.0) {
    metrics.realized_epsilon = accountant::account(
        metrics.sigma, metrics.sampling_rate, total_steps, config.delta);
  }

  std::vector<double> theta(task.param_dim(), 0.0);
  OptimizerState opt = config.optimizer == OptimizerState::Kind::kAdam
                           ? OptimizerState::adam(theta.size())
                           : OptimizerState::sgd();
  RngStream rng(config.seed, kTrainLoopStream);
  const double denom = static_cast<double>(config.batch_size);

  Matrix last_grads;
  long steps_taken = 0;
  for (int epoch = 0; epoch < config.epochs && !metrics.diverged; ++epoch) {
    const long epoch_end = (static_cast<long>(epoch + 1) * total_steps) /
                           config.epochs;
    for (; steps_taken < epoch_end; ++steps_taken) {
      const std::vector<std::size_t> selected =
          poisson_sample(n, metrics.sampling_rate, rng);
      Matrix batch_grads(0, theta.size());
      if (!selected.empty()) {
        Matrix batch_features(selected.size(), task.config.feature_dim);
        std::vector<int> batch_labels(selected.size());
        for (std::size_t i = 0; i < selected.size(); ++i) {
          const auto src = task.train.features.row(selected[i]);
          std::copy(src.begin(), src.end(), batch_features.row(i).begin());
          batch_labels[i] = task.train.labels[selected[i]];
        }
        batch_grads = loss_and_grads(theta, batch_features, batch_labels, k)
                          .per_example;
      }
      dp_update(theta, batch_grads, config.clip, metrics.sigma, config.eta,
                denom, opt, rng);
      bool finite = true;
      for (double v : theta) finite = finite && std::isfinite(v);
      if (!finite) {
        metrics.diverged = true;
        ++steps_taken;
        break;
      }
    }
    if (metrics.diverged) break;

    EpochRecord record;
    record.epoch = epoch;
    LossAndGrads full =
        loss_and_grads(theta, task.train.features, task.train.labels, k);
    record.train_loss = full.mean_loss;
    record.grad_norms = diagnostics::grad_norm_distribution(full.per_example);
    const std::vector<int> predictions = predict(theta, task.test.features, k);
    record.test_class_accuracy =
        diagnostics::per_class_accuracy(predictions, task.test.labels);
    record.test_macro_accuracy =
        diagnostics::macro_accuracy(predictions, task.test.labels);
    metrics.epochs.push_back(std::move(record));
    last_grads = std::move(full.per_example);
    if (!std::isfinite(metrics.epochs.back().train_loss) ||
        metrics.epochs.back().train_loss > 1e6) {
      metrics.diverged = true;
    }
  }
  metrics.steps = steps_taken;
  if (config.keep_artifacts) {
    metrics.theta = std::move(theta);
    metrics.final_train_gradients = std::move(last_grads);
  }
  return metrics;
}

SweepResults sweep(const Task& task, const SweepConfig& config) {
  if (config.etas.empty() || config.batch_sizes.empty() ||
      config.clips.empty() || config.epsilons.empty()) {
    throw ConfigError("sweep: every grid must be non-empty");
  }
  if (config.repeats < 1) throw ConfigError("sweep: repeats must be >= 1");
  for (double eps : config.epsilons) {
    if (!(eps > 0.0)) throw ConfigError("sweep: epsilon targets must be > 0");
  }

  struct ConfigPoint {
    double epsilon;
    double eta;
    long batch_size;
    ClipMode clip;
  };
  std::vector<ConfigPoint> points;
  for (double eps : config.epsilons) {
    for (double eta : config.etas) {
      for (long b : config.batch_sizes) {
        for (const ClipMode& clip : config.clips) {
          points.push_back({eps, eta, b, clip});
        }
      }
    }
  }

  SweepResults results;
  const std::size_t total =
      points.size() * static_cast<std::size_t>(config.repeats);
  results.records.resize(total);
  // Validate the whole grid up-front so the parallel loop below can only
  // fail through calibration, which is caught per run.
  for (const ConfigPoint& p : points) {
    TrainConfig probe;
    probe.eta = p.eta;
    probe.batch_size = p.batch_size;
    probe.clip = p.clip;
    probe.epochs = config.epochs;
    probe.epsilon = p.epsilon;
    probe.delta = config.delta;
    if (probe.batch_size < 1 ||
        probe.batch_size > static_cast<long>(task.train.features.rows()) ||
        !(probe.clip.param > 0.0) || !std::isfinite(probe.eta)) {
      throw ConfigError("sweep: invalid grid point");
    }
  }

  parallel_for(total, [&](std::size_t flat) {
    const std::size_t config_index =
        flat / static_cast<std::size_t>(config.repeats);
    const int repeat =
        static_cast<int>(flat % static_cast<std::size_t>(config.repeats));
    const ConfigPoint& p = points[config_index];

    SweepRecord& record = results.records[flat];
    record.config_index = config_index;
    record.eta = p.eta;
    record.batch_size = p.batch_size;
    record.clip = p.clip;
    record.epsilon = p.epsilon;
    record.repeat = repeat;
    record.seed = mix_seed(mix_seed(config.master_seed, config_index + 1),
                           static_cast<std::uint64_t>(repeat) + 1);

    TrainConfig run;
    run.eta = p.eta;
    run.batch_size = p.batch_size;
    run.clip = p.clip;
    run.epochs = config.epochs;
    run.epsilon = p.epsilon;
    run.delta = config.delta;
    run.optimizer = config.optimizer;
    run.seed = record.seed;
    run.keep_artifacts = false;
    try {
      record.metrics = train(task, run);
    } catch (const CalibrationError&) {
      record.calibration_failed = true;
    }
  });

  results.aggregates.reserve(points.size());
  for (std::size_t ci = 0; ci < points.size(); ++ci) {
    SweepAggregate agg;
    agg.config_index = ci;
    agg.epsilon = points[ci].epsilon;
    agg.eta = points[ci].eta;
    agg.batch_size = points[ci].batch_size;
    agg.clip = points[ci].clip;
    double sum_macro = 0.0;
    double sum_loss = 0.0;
    int ok = 0;
    for (int r = 0; r < config.repeats; ++r) {
      const SweepRecord& record =
          results.records[ci * static_cast<std::size_t>(config.repeats) +
                          static_cast<std::size_t>(r)];
      ++agg.runs;
      if (record.failed()) {
        ++agg.failed;
        continue;
      }
      const double macro = record.metrics.final_macro_accuracy();
      const double loss = record.metrics.final_loss();
      if (ok == 0) {
        agg.min_macro_accuracy = macro;
        agg.max_macro_accuracy = macro;
      } else {
        agg.min_macro_accuracy = std::min(agg.min_macro_accuracy, macro);
        agg.max_macro_accuracy = std::max(agg.max_macro_accuracy, macro);
      }
      sum_macro += macro;
      sum_loss += loss;
      ++ok;
    }
    if (ok > 0) {
      agg.mean_macro_accuracy = sum_macro / ok;
      agg.mean_final_loss = sum_loss / ok;
    } else {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      agg.mean_macro_accuracy = nan;
      agg.min_macro_accuracy = nan;
      agg.max_macro_accuracy = nan;
      agg.mean_final_loss = nan;
    }
    results.aggregates.push_back(agg);
  }

  // Best configuration per epsilon, in first-appearance order; ties to the
  // smaller clip parameter, then the smaller batch size, then smaller eta.
  std::vector<double> seen;
  for (double eps : config.epsilons) {
    if (std::find(seen.begin(), seen.end(), eps) != seen.end()) continue;
    seen.push_back(eps);
    const SweepAggregate* best = nullptr;
    for (const SweepAggregate& agg : results.aggregates) {
      if (agg.epsilon != eps || agg.runs == agg.failed) continue;
      if (best == nullptr) {
        best = &agg;
        continue;
      }
      const auto key = [](const SweepAggregate& a) {
        return std::tuple(-a.mean_macro_accuracy, a.clip.param, a.batch_size,
                          a.eta);
      };
      if (key(agg) < key(*best)) best = &agg;
    }
    if (best != nullptr) {
      results.best.push_back({best->epsilon, best->eta, best->batch_size,
                              best->clip, best->mean_macro_accuracy});
    }
  }
  return results;
}

}  // namespace dpopt::harness
