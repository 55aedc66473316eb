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

#include "dpopt/clipopt.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dpopt/errors.hpp"

namespace dpopt::clipopt {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTinyBound = std::numeric_limits<double>::min();
constexpr double kBreakpointGuard = 1e-12;

void check_clip_bound(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw std::invalid_argument("clipopt: clip bound must be positive");
  }
}

void check_sigma(double sigma) {
  if (sigma < 0.0 || !std::isfinite(sigma)) {
    throw std::invalid_argument("clipopt: sigma must be >= 0");
  }
}

}  // namespace

ClipObjective::ClipObjective(const Matrix& grads, double sigma) {
  check_sigma(sigma);
  const std::size_t d = grads.cols();
  sigma_sq_d_ = sigma * sigma * static_cast<double>(d);

  const std::vector<double> norms = row_norms(grads);
  std::vector<std::size_t> order;
  order.reserve(norms.size());
  for (std::size_t i = 0; i < norms.size(); ++i) {
    if (norms[i] > 0.0) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (norms[a] != norms[b]) return norms[a] > norms[b];
    return a < b;
  });

  const std::size_t m = order.size();
  norms_desc_.resize(m);
  gg_.assign(m + 1, 0.0);
  gn_.assign(m + 1, 0.0);
  nn_.assign(m + 1, 0.0);
  std::vector<double> g_sum(d, 0.0);
  std::vector<double> n_sum(d, 0.0);
  for (std::size_t k = 1; k <= m; ++k) {
    const std::size_t i = order[k - 1];
    const double r = norms[i];
    norms_desc_[k - 1] = r;
    const auto row = grads.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      g_sum[j] += row[j];
      n_sum[j] += row[j] / r;
    }
    gg_[k] = dot(g_sum, g_sum);
    gn_[k] = dot(g_sum, n_sum);
    nn_[k] = dot(n_sum, n_sum);
  }

  breakpoints_.assign(norms_desc_.rbegin(), norms_desc_.rend());
  breakpoints_.erase(std::unique(breakpoints_.begin(), breakpoints_.end()),
                     breakpoints_.end());
}

std::size_t ClipObjective::count_clipped(double c) const {
  const auto it = std::lower_bound(norms_desc_.begin(), norms_desc_.end(), c,
                                   std::greater<double>());
  return static_cast<std::size_t>(it - norms_desc_.begin());
}

double ClipObjective::mse(double c) const {
  check_clip_bound(c);
  const std::size_t k = count_clipped(c);
  const double bias = std::max(0.0, gg_[k] - 2.0 * c * gn_[k] + c * c * nn_[k]);
  return c * c * sigma_sq_d_ + bias;
}

double ClipObjective::derivative(double c) const {
  check_clip_bound(c);
  const auto it =
      std::lower_bound(breakpoints_.begin(), breakpoints_.end(), c);
  if (it != breakpoints_.end() && std::abs(*it - c) < kBreakpointGuard) {
    throw NumericError("ClipObjective::derivative: C is a breakpoint");
  }
  if (it != breakpoints_.begin() &&
      std::abs(*(it - 1) - c) < kBreakpointGuard) {
    throw NumericError("ClipObjective::derivative: C is a breakpoint");
  }
  const std::size_t k = count_clipped(c);
  return 2.0 * c * (sigma_sq_d_ + nn_[k]) - 2.0 * gn_[k];
}

double mse_of_c(const Matrix& grads, double sigma, double c) {
  return ClipObjective(grads, sigma).mse(c);
}

double mse_derivative(const Matrix& grads, double sigma, double c) {
  return ClipObjective(grads, sigma).derivative(c);
}

ClipSolution solve_optimal_c(const Matrix& grads, double sigma) {
  const ClipObjective obj(grads, sigma);
  const std::vector<double>& bp = obj.breakpoints();
  const std::size_t d = grads.cols();

  ClipSolution sol;
  sol.g_aggregate.assign(d, 0.0);
  sol.unit_aggregate.assign(d, 0.0);

  if (bp.empty()) {
    sol.c_star = kTinyBound;
    sol.mse = obj.mse(sol.c_star);
    sol.segment_lo = 0.0;
    sol.segment_hi = kInf;
    sol.degenerate = true;
    return sol;
  }

  // Candidate minimizers: every breakpoint, plus each segment's quadratic
  // vertex when it falls inside the segment. On the first segment a vertex
  // at or below zero means the infimum sits at C -> 0+.
  std::vector<double> candidates(bp.begin(), bp.end());
  const std::size_t m = bp.size();
  for (std::size_t j = 0; j <= m; ++j) {
    const double lo = (j == 0) ? 0.0 : bp[j - 1];
    const double hi = (j == m) ? kInf : bp[j];
    const std::size_t k = obj.count_clipped(lo);
    const double a = obj.quad_a(k);
    const double b = obj.quad_b(k);
    if (a > 0.0) {
      const double vertex = b / a;
      if (vertex > lo && vertex < hi) {
        candidates.push_back(vertex);
      } else if (j == 0 && vertex <= 0.0) {
        candidates.push_back(kTinyBound);
      }
    } else if (j == 0) {
      // Flat segment (sigma = 0 and cancelling unit sum); take the smallest
      // representable bound.
      candidates.push_back(kTinyBound);
    }
  }
  std::sort(candidates.begin(), candidates.end());

  double best_c = candidates.front();
  double best_mse = obj.mse(best_c);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double value = obj.mse(candidates[i]);
    if (value < best_mse) {
      best_mse = value;
      best_c = candidates[i];
    }
  }
  sol.c_star = best_c;
  sol.mse = best_mse;

  const std::vector<double> norms = row_norms(grads);
  for (std::size_t i = 0; i < norms.size(); ++i) {
    if (norms[i] > sol.c_star) {
      sol.clipped_indices.push_back(i);
      const auto row = grads.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        sol.g_aggregate[j] += row[j];
        sol.unit_aggregate[j] += row[j] / norms[i];
      }
    }
  }

  const auto hi_it = std::upper_bound(bp.begin(), bp.end(), sol.c_star);
  sol.segment_hi = (hi_it == bp.end()) ? kInf : *hi_it;
  sol.segment_lo = (hi_it == bp.begin()) ? 0.0 : *(hi_it - 1);
  return sol;
}

GridResult grid_oracle(const Matrix& grads, double sigma,
                       std::span<const double> grid) {
  if (grid.empty()) {
    throw std::invalid_argument("grid_oracle: empty grid");
  }
  const ClipObjective obj(grads, sigma);
  GridResult best{grid[0], obj.mse(grid[0])};
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double value = obj.mse(grid[i]);
    if (value < best.mse_best) {
      best.mse_best = value;
      best.c_best = grid[i];
    }
  }
  return best;
}

std::vector<double> log_grid(double lo, double hi, std::size_t points) {
  if (!(lo > 0.0) || !(hi > lo) || points < 2) {
    throw std::invalid_argument("log_grid: need 0 < lo < hi and points >= 2");
  }
  std::vector<double> grid(points);
  const double step = std::log(hi / lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) {
    grid[i] = lo * std::exp(static_cast<double>(i) * step);
  }
  grid.back() = hi;
  return grid;
}

double koloskova_c_star(double smoothness, double eta, double sigma) {
  if (!(smoothness > 0.0) || !(eta > 0.0) || !(sigma > 0.0)) {
    throw std::invalid_argument(
        "koloskova_c_star: smoothness, eta and sigma must be positive");
  }
  return 1.0 / (4.0 * smoothness * eta * sigma * sigma * sigma);
}

double koloskova_bound(const KoloskovaParams& p, double c) {
  check_clip_bound(c);
  if (!(p.smoothness > 0.0) || !(p.eta > 0.0) || !(p.sigma > 0.0) ||
      p.sigma_minibatch < 0.0 || !(p.batch_size > 0.0) || p.f0_gap < 0.0 ||
      p.steps < 1) {
    throw std::invalid_argument("koloskova_bound: invalid parameters");
  }
  const double let = p.smoothness * p.eta;
  const double sb2 = p.sigma_minibatch * p.sigma_minibatch;
  const double t = static_cast<double>(p.steps);
  return let * c * p.sigma * p.sigma + std::sqrt(let * c * p.sigma) +
         std::min(sb2, sb2 * sb2 / (c * c)) + let * sb2 / p.batch_size +
         p.f0_gap / (p.eta * t) +
         p.f0_gap * p.f0_gap / (p.eta * p.eta * t * t * c * c);
}

}  // namespace dpopt::clipopt
