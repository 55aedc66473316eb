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

#ifndef DPOPT_DPCORE_HPP_
#define DPOPT_DPCORE_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dpopt/matrix.hpp"
#include "dpopt/rng.hpp"

namespace dpopt {

// Per-example clipping rule. `param` is the clipping bound C for the standard
// and normalized rules and the stabilizer gamma for auto_s.
struct ClipMode {
  enum class Kind { kStandard, kNormalized, kAutoS };

  Kind kind = Kind::kStandard;
  double param = 1.0;

  static ClipMode standard(double c) { return {Kind::kStandard, c}; }
  static ClipMode normalized(double c) { return {Kind::kNormalized, c}; }
  static ClipMode auto_s(double gamma) { return {Kind::kAutoS, gamma}; }

  // Upper bound on the L2 norm of one clipped contribution; the noise
  // standard deviation of a private sum is sigma * sensitivity().
  double sensitivity() const;

  std::string name() const;

  bool operator==(const ClipMode&) const = default;
};

// g * min(1, C / ||g||): norms above C are scaled down to exactly C.
void clip_standard(std::span<const double> g, double c, std::span<double> out);

// g * min(1/C, 1/||g||): the standard rule divided by C, so every
// contribution has norm at most 1.
void clip_normalized(std::span<const double> g, double c,
                     std::span<double> out);

// g / (||g|| + gamma): smooth normalization, norm strictly below 1.
void clip_auto_s(std::span<const double> g, double gamma,
                 std::span<double> out);

std::vector<double> clip_standard(std::span<const double> g, double c);
std::vector<double> clip_normalized(std::span<const double> g, double c);
std::vector<double> clip_auto_s(std::span<const double> g, double gamma);

// Applies the rule to every row; parallel over rows.
Matrix clip_batch(const Matrix& grads, ClipMode mode);

// Poisson subsample: includes each index independently with probability q.
// Consumes exactly n uniform draws regardless of the outcome, so downstream
// draws do not depend on which indices were selected.
std::vector<std::size_t> poisson_sample(std::size_t n, double q,
                                        RngStream& rng);

// Column sums; parallel over columns, each column accumulated in row order.
std::vector<double> sum_rows(const Matrix& m);

// (sum of rows + noise_std * xi) / denom with xi iid standard normal.
// Draws exactly cols gaussians when noise_std > 0 and none otherwise. An
// empty batch yields pure scaled noise.
std::vector<double> noisy_aggregate(const Matrix& clipped, double noise_std,
                                    double denom, RngStream& rng);

// First-order optimizer state. SGD keeps nothing; Adam keeps both moment
// vectors and the step counter for bias correction.
struct OptimizerState {
  enum class Kind { kSgd, kAdam };

  Kind kind = Kind::kSgd;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;

  static OptimizerState sgd() { return {}; }
  static OptimizerState adam(std::size_t dim) {
    OptimizerState s;
    s.kind = Kind::kAdam;
    s.first_moment.assign(dim, 0.0);
    s.second_moment.assign(dim, 0.0);
    return s;
  }
};

// theta <- theta - eta * direction(grad). SGD uses grad itself; Adam updates
// its moments first and uses the bias-corrected ratio.
void optimizer_step(std::vector<double>& theta, std::span<const double> grad,
                    double eta, OptimizerState& state);

// One private step: clip rows of batch_grads, aggregate with noise
// sigma * sensitivity(mode) divided by denom, then apply the optimizer.
// An empty batch still performs a (noise-only) update.
void dp_update(std::vector<double>& theta, const Matrix& batch_grads,
               ClipMode mode, double sigma, double eta, double denom,
               OptimizerState& state, RngStream& rng);

}  // namespace dpopt

#endif  // DPOPT_DPCORE_HPP_
