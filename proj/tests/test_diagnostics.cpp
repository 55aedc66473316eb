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

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "dpopt/matrix.hpp"
#include "dpopt/rng.hpp"

using namespace dpopt;
using namespace dpopt::diagnostics;

TEST_CASE("retained weight is min(1, c / norm)") {
  CHECK(retained_weight_from_norm(4.0, 1.0) == 0.25);
  CHECK(retained_weight_from_norm(0.5, 1.0) == 1.0);
  CHECK(retained_weight_from_norm(1.0, 1.0) == 1.0);
  CHECK(retained_weight_from_norm(0.0, 2.0) == 1.0);

  const std::vector<double> g{3.0, 4.0};
  CHECK(retained_weight(g, 2.5) == 0.5);
  CHECK(retained_weight(g, 50.0) == 1.0);

  CHECK_THROWS_AS(retained_weight_from_norm(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(retained_weight_from_norm(-1.0, 1.0), std::invalid_argument);
}

TEST_CASE("retained weight lies in [0, 1] and increases with c") {
  RngStream rng(61, 0);
  for (int i = 0; i < 200; ++i) {
    const double norm = 10.0 * rng.uniform();
    double prev = 0.0;
    for (double c : {0.1, 0.5, 1.0, 2.0, 10.0, 100.0}) {
      const double w = retained_weight_from_norm(norm, c);
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      CHECK(w >= prev);
      prev = w;
    }
    CHECK(retained_weight_from_norm(norm, norm + 1.0) == 1.0);
  }
}

TEST_CASE("per-class retained weights on a hand batch") {
  // Class 0: norms 4 and 2 at c = 1 -> weights 0.25, 0.5, mean 0.375.
  // Class 2: norms 0.5 and 0 -> weights 1, 1, mean 1. Max class is 2.
  const Matrix grads =
      Matrix::from_rows({{4.0, 0.0}, {0.0, 0.5}, {2.0, 0.0}, {0.0, 0.0}});
  const std::vector<int> labels{0, 2, 0, 2};
  const std::vector<ClassRetainedWeight> out =
      class_retained_weights(grads, labels, 1.0);
  REQUIRE(out.size() == 2);
  CHECK(out[0].class_id == 0);
  CHECK(out[0].count == 2);
  CHECK(out[0].mean_weight == 0.375);
  CHECK(out[0].relative_weight == 0.375);
  CHECK(out[1].class_id == 2);
  CHECK(out[1].count == 2);
  CHECK(out[1].mean_weight == 1.0);
  CHECK(out[1].relative_weight == 1.0);

  const std::vector<int> bad{0, 1};
  CHECK_THROWS_AS(class_retained_weights(grads, bad, 1.0),
                  std::invalid_argument);
}

TEST_CASE("the max class of a self-normalized batch sits exactly at 1") {
  RngStream rng(62, 0);
  Matrix grads(40, 3);
  std::vector<int> labels(40);
  for (std::size_t i = 0; i < 40; ++i) {
    labels[i] = static_cast<int>(rng.uniform_index(4));
    for (std::size_t j = 0; j < 3; ++j) grads(i, j) = 3.0 * rng.gaussian();
  }
  for (double c : {0.1, 1.0, 10.0}) {
    const std::vector<ClassRetainedWeight> out =
        class_retained_weights(grads, labels, c);
    double max_rel = 0.0;
    for (const ClassRetainedWeight& w : out) {
      CHECK(w.relative_weight >= 0.0);
      CHECK(w.relative_weight <= 1.0);
      max_rel = std::max(max_rel, w.relative_weight);
    }
    CHECK(max_rel == 1.0);
  }
  // A bound above every norm retains everything.
  const std::vector<ClassRetainedWeight> all =
      class_retained_weights(grads, labels, 1e6);
  for (const ClassRetainedWeight& w : all) {
    CHECK(w.mean_weight == 1.0);
    CHECK(w.relative_weight == 1.0);
  }
}

TEST_CASE("re-normalizing against a baseline rescales, nothing else") {
  const Matrix grads = Matrix::from_rows({{4.0, 0.0}, {0.0, 0.5}});
  const std::vector<int> labels{0, 1};
  const std::vector<ClassRetainedWeight> baseline =
      class_retained_weights(grads, labels, 1.0);  // means 0.25 and 1
  std::vector<ClassRetainedWeight> current =
      class_retained_weights(grads, labels, 2.0);  // means 0.5 and 1
  current = relative_retained_weights(std::move(current), baseline);
  CHECK(current[0].relative_weight == 0.5);
  CHECK(current[1].relative_weight == 1.0);

  CHECK_THROWS_AS(relative_retained_weights({}, {}), std::invalid_argument);
}

TEST_CASE("interpolated quantiles of 1..100") {
  std::vector<double> norms(100);
  std::iota(norms.begin(), norms.end(), 1.0);
  const GradNormSummary s = summarize_norms(norms, 8);
  CHECK(s.quantiles[0] == doctest::Approx(5.95).epsilon(1e-12));
  CHECK(s.quantiles[1] == doctest::Approx(25.75).epsilon(1e-12));
  CHECK(s.quantiles[2] == doctest::Approx(50.5).epsilon(1e-12));
  CHECK(s.quantiles[3] == doctest::Approx(75.25).epsilon(1e-12));
  CHECK(s.quantiles[4] == doctest::Approx(95.05).epsilon(1e-12));
  CHECK(s.median() == s.quantiles[2]);
  CHECK(s.count == 100);
  CHECK(s.zero_count == 0);
}

TEST_CASE("histogram counts partition the positive norms") {
  RngStream rng(63, 0);
  std::vector<double> norms;
  for (int i = 0; i < 300; ++i) {
    norms.push_back(i % 7 == 0 ? 0.0 : std::exp(3.0 * rng.gaussian()));
  }
  const GradNormSummary s = summarize_norms(norms, 16);
  REQUIRE(s.bin_edges.size() == 17);
  REQUIRE(s.bin_counts.size() == 16);
  std::size_t total = s.zero_count;
  for (std::size_t c : s.bin_counts) total += c;
  CHECK(total == norms.size());
  CHECK(s.zero_count == 43);
  for (std::size_t i = 0; i + 1 < s.bin_edges.size(); ++i) {
    CHECK(s.bin_edges[i] < s.bin_edges[i + 1]);
  }
}

TEST_CASE("degenerate norm distributions") {
  const GradNormSummary constant = summarize_norms({2.0, 2.0, 2.0}, 16);
  CHECK(constant.quantiles[0] == 2.0);
  CHECK(constant.quantiles[4] == 2.0);
  CHECK(constant.bin_edges == std::vector<double>{2.0, 2.0});
  CHECK(constant.bin_counts == std::vector<std::size_t>{3});

  const GradNormSummary zeros = summarize_norms({0.0, 0.0}, 16);
  CHECK(zeros.zero_count == 2);
  CHECK(zeros.bin_edges.empty());
  CHECK(zeros.bin_counts.empty());

  const GradNormSummary single = summarize_norms({7.0}, 4);
  CHECK(single.quantiles[2] == 7.0);

  CHECK_THROWS_AS(summarize_norms({}, 16), std::invalid_argument);
  CHECK_THROWS_AS(summarize_norms({1.0}, 0), std::invalid_argument);
}

TEST_CASE("grad_norm_distribution summarizes row norms") {
  const Matrix grads = Matrix::from_rows({{3.0, 4.0}, {0.0, 0.0}});
  const GradNormSummary s = grad_norm_distribution(grads, 4);
  CHECK(s.count == 2);
  CHECK(s.zero_count == 1);
  // Quantiles cover the full norm distribution, zeros included: the sorted
  // norms are {0, 5}, so p95 interpolates to 0.95 * 5.
  CHECK(s.quantiles[4] == doctest::Approx(4.75).epsilon(1e-15));
  CHECK(s.quantiles[2] == doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("per-class and macro accuracy") {
  const std::vector<int> preds{0, 1, 1, 0};
  const std::vector<int> labels{0, 1, 0, 0};
  const std::vector<ClassAccuracy> per_class =
      per_class_accuracy(preds, labels);
  REQUIRE(per_class.size() == 2);
  CHECK(per_class[0].class_id == 0);
  CHECK(per_class[0].count == 3);
  CHECK(per_class[0].accuracy == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(per_class[1].class_id == 1);
  CHECK(per_class[1].count == 1);
  CHECK(per_class[1].accuracy == 1.0);
  CHECK(macro_accuracy(preds, labels) ==
        doctest::Approx(5.0 / 6.0).epsilon(1e-15));

  const std::vector<int> short_preds{0};
  CHECK_THROWS_AS(per_class_accuracy(short_preds, labels),
                  std::invalid_argument);
  CHECK_THROWS_AS(macro_accuracy({}, {}), std::invalid_argument);
}
