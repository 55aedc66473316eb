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

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "dpopt/accountant.hpp"
#include "dpopt/dpcore.hpp"
#include "dpopt/errors.hpp"
#include "dpopt/matrix.hpp"
#include "dpopt/rng.hpp"

namespace {

using namespace dpopt;
using namespace dpopt::harness;

SyntheticTaskConfig small_task_config() {
  SyntheticTaskConfig config;
  config.num_classes = 3;
  config.raw_dim = 8;
  config.feature_dim = 6;
  config.train_size = 60;
  config.test_size = 45;
  config.class_separation = 3.0;
  config.seed = 5;
  return config;
}

// Classification error of the nearest-centroid rule, a crude proxy for how
// separable the features still are.
double centroid_error(const Task& task) {
  const std::size_t f = task.config.feature_dim;
  const int k = task.config.num_classes;
  Matrix centroids(k, f);
  std::vector<double> counts(k, 0.0);
  for (std::size_t i = 0; i < task.train.features.rows(); ++i) {
    const int label = task.train.labels[i];
    counts[label] += 1.0;
    for (std::size_t j = 0; j < f; ++j) {
      centroids(label, j) += task.train.features(i, j);
    }
  }
  for (int c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < f; ++j) centroids(c, j) /= counts[c];
  }
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < task.test.features.rows(); ++i) {
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      double dist = 0.0;
      for (std::size_t j = 0; j < f; ++j) {
        const double diff = task.test.features(i, j) - centroids(c, j);
        dist += diff * diff;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = c;
      }
    }
    if (best != task.test.labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) /
         static_cast<double>(task.test.features.rows());
}

}  // namespace

TEST_CASE("gen_task is deterministic in the seed") {
  const SyntheticTaskConfig config = small_task_config();
  const Task a = gen_task(config);
  const Task b = gen_task(config);
  CHECK(a.train.features == b.train.features);
  CHECK(a.train.labels == b.train.labels);
  CHECK(a.test.features == b.test.features);
  CHECK(a.test.labels == b.test.labels);
  CHECK(a.backbone.projection() == b.backbone.projection());
  CHECK(a.param_dim() == 3 * 6 + 3);

  SyntheticTaskConfig other = config;
  other.seed = 6;
  CHECK(gen_task(other).train.features != a.train.features);
}

TEST_CASE("class weights drive the label frequencies") {
  SyntheticTaskConfig config;
  config.num_classes = 4;
  config.train_size = 2000;
  config.test_size = 400;
  config.class_weights = {0.35, 0.30, 0.20, 0.15};
  config.seed = 7;
  const Task task = gen_task(config);
  std::vector<double> counts(4, 0.0);
  for (int label : task.train.labels) counts[label] += 1.0;
  for (int k = 0; k < 4; ++k) {
    const double expected = 2000.0 * config.class_weights[k];
    const double sd = std::sqrt(expected * (1.0 - config.class_weights[k]));
    CHECK(std::abs(counts[k] - expected) < 4.0 * sd);
  }
}

TEST_CASE("gen_task rejects malformed configurations") {
  SyntheticTaskConfig config = small_task_config();
  config.num_classes = 1;
  CHECK_THROWS_AS(gen_task(config), ConfigError);
  config = small_task_config();
  config.class_weights = {0.5, 0.5};
  CHECK_THROWS_AS(gen_task(config), ConfigError);
  config = small_task_config();
  config.class_weights = {0.5, 0.4, 0.2};
  CHECK_THROWS_AS(gen_task(config), ConfigError);
  config = small_task_config();
  config.backbone_quality = 0.0;
  CHECK_THROWS_AS(gen_task(config), ConfigError);
  config = small_task_config();
  config.backbone_quality = 1.5;
  CHECK_THROWS_AS(gen_task(config), ConfigError);
  config = small_task_config();
  config.class_separation = -1.0;
  CHECK_THROWS_AS(gen_task(config), ConfigError);
  config = small_task_config();
  config.train_size = 2;
  CHECK_THROWS_AS(gen_task(config), ConfigError);
}

TEST_CASE("backbone projection depends on the seed, not the quality") {
  const Backbone sharp(8, 6, 1.0, 42);
  const Backbone noisy(8, 6, 0.3, 42);
  CHECK(sharp.projection() == noisy.projection());
  const Backbone other(8, 6, 1.0, 43);
  CHECK(sharp.projection() != other.projection());

  // A perfect backbone is exactly tanh of the projection.
  RngStream rng(9, 0);
  std::vector<double> raw(8);
  for (double& v : raw) v = rng.gaussian();
  const std::vector<double> features = sharp.apply(raw);
  for (std::size_t i = 0; i < features.size(); ++i) {
    CHECK(features[i] == std::tanh(dot(sharp.projection().row(i), raw)));
  }

  // Feature noise is a pure function of the input: same raw, same output.
  CHECK(noisy.apply(raw) == noisy.apply(raw));
  CHECK(noisy.apply(raw) != features);
}

TEST_CASE("lower backbone quality degrades feature separability") {
  SyntheticTaskConfig config;
  config.train_size = 2000;
  config.test_size = 1000;
  config.seed = 1;
  config.backbone_quality = 1.0;
  const double err_sharp = centroid_error(gen_task(config));
  config.backbone_quality = 0.6;
  const double err_mid = centroid_error(gen_task(config));
  config.backbone_quality = 0.3;
  const double err_noisy = centroid_error(gen_task(config));
  CHECK(err_sharp < err_mid);
  CHECK(err_mid < err_noisy);
}

TEST_CASE("the zero head scores log K loss and predicts class 0") {
  const Task task = gen_task(small_task_config());
  const std::vector<double> theta(task.param_dim(), 0.0);
  const double loss = mean_loss(theta, task.train.features, task.train.labels,
                                task.config.num_classes);
  CHECK(loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));

  const std::vector<int> predictions =
      predict(theta, task.test.features, task.config.num_classes);
  for (int p : predictions) CHECK(p == 0);
}

TEST_CASE("analytic gradients match finite differences") {
  const Task task = gen_task(small_task_config());
  const int k = task.config.num_classes;
  std::vector<double> theta(task.param_dim());
  RngStream rng(17, 0);
  for (double& v : theta) v = 0.5 * rng.gaussian();

  const LossAndGrads lg =
      loss_and_grads(theta, task.train.features, task.train.labels, k);
  const std::vector<double> mean_grad = sum_rows(lg.per_example);
  const double n = static_cast<double>(task.train.features.rows());

  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double h = 1e-6;
    std::vector<double> plus = theta, minus = theta;
    plus[j] += h;
    minus[j] -= h;
    const double fd =
        (mean_loss(plus, task.train.features, task.train.labels, k) -
         mean_loss(minus, task.train.features, task.train.labels, k)) /
        (2.0 * h);
    const double analytic = mean_grad[j] / n;
    CHECK(std::abs(fd - analytic) <= 1e-5 * (1.0 + std::abs(analytic)));
  }
}

TEST_CASE("parallel and serial head gradients agree bit for bit") {
  const Task task = gen_task(small_task_config());
  const int k = task.config.num_classes;
  std::vector<double> theta(task.param_dim());
  RngStream rng(18, 0);
  for (double& v : theta) v = rng.gaussian();
  const LossAndGrads a =
      loss_and_grads(theta, task.train.features, task.train.labels, k);
  const LossAndGrads b = serial_ref::loss_and_grads(
      theta, task.train.features, task.train.labels, k);
  CHECK(a.mean_loss == b.mean_loss);
  CHECK(a.per_example == b.per_example);
}

TEST_CASE("duplicated examples produce identical gradient rows") {
  const Task task = gen_task(small_task_config());
  Matrix features(2, task.config.feature_dim);
  for (std::size_t j = 0; j < task.config.feature_dim; ++j) {
    features(0, j) = task.train.features(0, j);
    features(1, j) = task.train.features(0, j);
  }
  const std::vector<int> labels{task.train.labels[0], task.train.labels[0]};
  std::vector<double> theta(task.param_dim());
  RngStream rng(19, 0);
  for (double& v : theta) v = rng.gaussian();
  const LossAndGrads lg =
      loss_and_grads(theta, features, labels, task.config.num_classes);
  for (std::size_t j = 0; j < theta.size(); ++j) {
    CHECK(lg.per_example(0, j) == lg.per_example(1, j));
  }
}

TEST_CASE("head input validation") {
  const Task task = gen_task(small_task_config());
  const std::vector<double> theta(task.param_dim(), 0.0);
  const std::vector<double> short_theta(task.param_dim() - 1, 0.0);
  CHECK_THROWS_AS(loss_and_grads(short_theta, task.train.features,
                                 task.train.labels, 3),
                  std::invalid_argument);
  const std::vector<int> no_labels;
  CHECK_THROWS_AS(loss_and_grads(theta, Matrix(0, 6), no_labels, 3),
                  std::invalid_argument);
  const std::vector<int> bad_labels(task.train.features.rows(), 3);
  CHECK_THROWS_AS(
      loss_and_grads(theta, task.train.features, bad_labels, 3),
      std::invalid_argument);
  CHECK_THROWS_AS(predict(short_theta, task.test.features, 3),
                  std::invalid_argument);
}

TEST_CASE("training regression at a fixed seed") {
  const SyntheticTaskConfig task_config;  // library defaults
  const Task task = gen_task(task_config);
  TrainConfig config;
  config.eta = 0.5;
  config.batch_size = 128;
  config.epochs = 4;
  config.epsilon = 1.0;
  config.clip = ClipMode::normalized(1.0);
  config.seed = 1;
  const RunMetrics metrics = train(task, config);

  CHECK(metrics.steps == 63);
  CHECK(metrics.sampling_rate == 128.0 / 2000.0);
  CHECK(metrics.sigma == doctest::Approx(2.8458816658225308).epsilon(1e-9));
  CHECK(std::abs(metrics.realized_epsilon - 1.0) <= 1e-3);
  REQUIRE(metrics.epochs.size() == 4);
  CHECK(metrics.epochs.front().epoch == 0);
  CHECK(metrics.epochs.back().epoch == 3);
  CHECK(metrics.final_loss() ==
        doctest::Approx(0.5595304019209537).epsilon(1e-9));
  CHECK(metrics.final_macro_accuracy() ==
        doctest::Approx(0.7689657634656046).epsilon(1e-9));
  CHECK(metrics.final_median_grad_norm() ==
        doctest::Approx(1.006771250377407).epsilon(1e-9));
  CHECK(metrics.diverged == false);
  CHECK(metrics.theta.size() == task.param_dim());
  CHECK(metrics.final_train_gradients.rows() == 2000);

  // Bitwise repeatability.
  const RunMetrics again = train(task, config);
  CHECK(again.final_loss() == metrics.final_loss());
  CHECK(again.theta == metrics.theta);
  CHECK(again.final_train_gradients == metrics.final_train_gradients);
}

TEST_CASE("an explicit sigma skips calibration but not accounting") {
  const Task task = gen_task(small_task_config());
  TrainConfig config;
  config.batch_size = 30;
  config.epochs = 2;
  config.sigma = 1.5;
  config.seed = 3;
  const RunMetrics metrics = train(task, config);
  CHECK(metrics.sigma == 1.5);
  CHECK(metrics.realized_epsilon ==
        accountant::account(1.5, metrics.sampling_rate, metrics.steps,
                            config.delta));

  TrainConfig clean = config;
  clean.sigma = 0.0;
  const RunMetrics free_run = train(task, clean);
  CHECK(std::isinf(free_run.realized_epsilon));
  CHECK(free_run.diverged == false);
}

TEST_CASE("artifacts can be dropped") {
  const Task task = gen_task(small_task_config());
  TrainConfig config;
  config.batch_size = 30;
  config.epochs = 1;
  config.sigma = 1.0;
  config.keep_artifacts = false;
  const RunMetrics metrics = train(task, config);
  CHECK(metrics.theta.empty());
  CHECK(metrics.final_train_gradients.rows() == 0);
}

TEST_CASE("noise-free full-batch training is plain gradient descent") {
  SyntheticTaskConfig task_config = small_task_config();
  task_config.train_size = 50;
  const Task task = gen_task(task_config);
  const int k = task.config.num_classes;

  TrainConfig config;
  config.eta = 0.3;
  config.batch_size = 50;
  config.epochs = 3;
  config.sigma = 0.0;
  config.clip = ClipMode::standard(1e12);
  const RunMetrics metrics = train(task, config);
  CHECK(metrics.steps == 3);

  std::vector<double> theta(task.param_dim(), 0.0);
  for (int t = 0; t < 3; ++t) {
    const LossAndGrads lg =
        loss_and_grads(theta, task.train.features, task.train.labels, k);
    const std::vector<double> mean = sum_rows(lg.per_example);
    for (std::size_t j = 0; j < theta.size(); ++j) {
      theta[j] -= config.eta * (mean[j] / 50.0);
    }
  }
  REQUIRE(metrics.theta.size() == theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) {
    CHECK(std::abs(metrics.theta[j] - theta[j]) <= 1e-9);
  }
}

TEST_CASE("train validates its configuration") {
  const Task task = gen_task(small_task_config());
  TrainConfig config;
  config.batch_size = 30;
  config.epochs = 1;

  TrainConfig bad = config;
  bad.epsilon = 1.0;
  bad.sigma = 1.0;
  CHECK_THROWS_AS(train(task, bad), ConfigError);
  bad = config;
  bad.epochs = 0;
  CHECK_THROWS_AS(train(task, bad), ConfigError);
  bad = config;
  bad.batch_size = 0;
  CHECK_THROWS_AS(train(task, bad), ConfigError);
  bad = config;
  bad.batch_size = 61;
  CHECK_THROWS_AS(train(task, bad), ConfigError);
  bad = config;
  bad.clip = ClipMode::standard(0.0);
  CHECK_THROWS_AS(train(task, bad), ConfigError);
  bad = config;
  bad.eta = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(train(task, bad), ConfigError);
  bad = config;
  bad.epsilon = -1.0;
  CHECK_THROWS_AS(train(task, bad), ConfigError);
}

TEST_CASE("a wildly large step size is reported as divergence") {
  const Task task = gen_task(small_task_config());
  TrainConfig config;
  config.eta = 1e9;
  config.batch_size = 30;
  config.epochs = 2;
  config.sigma = 0.0;
  const RunMetrics metrics = train(task, config);
  CHECK(metrics.diverged == true);
  CHECK(std::isnan(metrics.final_macro_accuracy()) ==
        metrics.epochs.empty());
}

TEST_CASE("sweep covers the grid deterministically") {
  SyntheticTaskConfig task_config = small_task_config();
  task_config.train_size = 120;
  task_config.test_size = 60;
  const Task task = gen_task(task_config);

  SweepConfig config;
  config.etas = {0.1, 0.3};
  config.batch_sizes = {30};
  config.clips = {ClipMode::normalized(1.0)};
  config.epsilons = {1.0, 4.0};
  config.epochs = 2;
  config.repeats = 2;
  config.master_seed = 11;
  const SweepResults results = sweep(task, config);

  REQUIRE(results.records.size() == 8);
  REQUIRE(results.aggregates.size() == 4);
  for (std::size_t i = 0; i < results.records.size(); ++i) {
    const SweepRecord& r = results.records[i];
    CHECK(r.config_index == i / 2);
    CHECK(r.repeat == static_cast<int>(i % 2));
    CHECK(r.calibration_failed == false);
    CHECK(r.metrics.theta.empty());  // sweeps drop artifacts
  }
  // Same master seed, same records; a run's seed depends only on its cell.
  const SweepResults again = sweep(task, config);
  for (std::size_t i = 0; i < results.records.size(); ++i) {
    CHECK(again.records[i].seed == results.records[i].seed);
    CHECK(again.records[i].metrics.final_loss() ==
          results.records[i].metrics.final_loss());
  }

  // Aggregates are plain averages of their cell's repeats.
  for (const SweepAggregate& agg : results.aggregates) {
    double sum_macro = 0.0, sum_loss = 0.0;
    double lo = 1.0, hi = 0.0;
    for (int r = 0; r < config.repeats; ++r) {
      const SweepRecord& rec =
          results.records[agg.config_index * 2 + static_cast<std::size_t>(r)];
      const double macro = rec.metrics.final_macro_accuracy();
      sum_macro += macro;
      sum_loss += rec.metrics.final_loss();
      lo = std::min(lo, macro);
      hi = std::max(hi, macro);
    }
    CHECK(agg.runs == 2);
    CHECK(agg.failed == 0);
    CHECK(agg.mean_macro_accuracy == sum_macro / 2);
    CHECK(agg.mean_final_loss == sum_loss / 2);
    CHECK(agg.min_macro_accuracy == lo);
    CHECK(agg.max_macro_accuracy == hi);
  }

  // Per epsilon the best entry attains the maximum mean accuracy.
  REQUIRE(results.best.size() == 2);
  for (const BestConfig& best : results.best) {
    double top = 0.0;
    for (const SweepAggregate& agg : results.aggregates) {
      if (agg.epsilon == best.epsilon) {
        top = std::max(top, agg.mean_macro_accuracy);
      }
    }
    CHECK(best.mean_macro_accuracy == top);
  }
}

TEST_CASE("sweep survives an unreachable privacy target") {
  SyntheticTaskConfig task_config = small_task_config();
  task_config.train_size = 120;
  const Task task = gen_task(task_config);
  SweepConfig config;
  config.epsilons = {0.01};
  config.batch_sizes = {30};
  config.epochs = 1;
  config.repeats = 2;
  const SweepResults results = sweep(task, config);
  REQUIRE(results.records.size() == 2);
  for (const SweepRecord& r : results.records) {
    CHECK(r.calibration_failed == true);
    CHECK(r.failed());
  }
  REQUIRE(results.aggregates.size() == 1);
  CHECK(results.aggregates[0].failed == 2);
  CHECK(std::isnan(results.aggregates[0].mean_macro_accuracy));
  CHECK(results.best.empty());
}

TEST_CASE("sweep validates its grids") {
  const Task task = gen_task(small_task_config());
  SweepConfig config;
  config.etas = {};
  CHECK_THROWS_AS(sweep(task, config), ConfigError);
  config = SweepConfig{};
  config.repeats = 0;
  CHECK_THROWS_AS(sweep(task, config), ConfigError);
  config = SweepConfig{};
  config.epsilons = {-1.0};
  CHECK_THROWS_AS(sweep(task, config), ConfigError);
  config = SweepConfig{};
  config.batch_sizes = {10000};
  CHECK_THROWS_AS(sweep(task, config), ConfigError);
}
