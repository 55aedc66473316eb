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

#ifndef DPOPT_CLIPOPT_HPP_
#define DPOPT_CLIPOPT_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "dpopt/matrix.hpp"

namespace dpopt::clipopt {

// Mean squared error of the noisy clipped sum against the true sum of the
// gradients, as a function of the clip bound C:
//
//   mse(C) = C^2 sigma^2 d + || sum_{i in I_C} (||g_i|| - C)/||g_i|| g_i ||^2
//
// where I_C = { i : ||g_i|| > C }. Piecewise quadratic in C with breakpoints
// at the distinct gradient norms. This class precomputes per-segment scalars
// so one evaluation costs O(log B) after O(B d + B log B) setup.
class ClipObjective {
 public:
  ClipObjective(const Matrix& grads, double sigma);

  double mse(double c) const;

  // d mse / d C. Throws NumericError within 1e-12 of a breakpoint, where the
  // one-sided derivatives disagree.
  double derivative(double c) const;

  double sigma_sq_d() const { return sigma_sq_d_; }

  // Distinct positive gradient norms, ascending.
  const std::vector<double>& breakpoints() const { return breakpoints_; }

  std::size_t count_clipped(double c) const;

  // Quadratic coefficients of mse on the segment where exactly k gradients
  // are clipped: mse(C) = quad_a(k) C^2 - 2 quad_b(k) C + quad_c(k).
  double quad_a(std::size_t k) const { return sigma_sq_d_ + nn_[k]; }
  double quad_b(std::size_t k) const { return gn_[k]; }
  double quad_c(std::size_t k) const { return gg_[k]; }

 private:
  double sigma_sq_d_ = 0.0;
  std::vector<double> breakpoints_;
  // Indexed by k = number of clipped gradients (the k largest norms):
  // gg = G.G, gn = G.N, nn = N.N for G = sum of those gradients and
  // N = sum of their unit vectors.
  std::vector<double> gg_, gn_, nn_;
  // norms_desc_[k-1] is the k-th largest positive norm.
  std::vector<double> norms_desc_;
};

double mse_of_c(const Matrix& grads, double sigma, double c);
double mse_derivative(const Matrix& grads, double sigma, double c);

struct ClipSolution {
  double c_star = 0.0;
  double mse = 0.0;
  // Rows whose norm exceeds c_star, ascending original indices.
  std::vector<std::size_t> clipped_indices;
  // G_{C*} and N_{C*}: sums of the clipped gradients and of their unit
  // vectors.
  std::vector<double> g_aggregate;
  std::vector<double> unit_aggregate;
  // Breakpoint-free interval around c_star.
  double segment_lo = 0.0;
  double segment_hi = 0.0;
  // True when every gradient is zero (or the batch is empty); c_star is then
  // an arbitrary tiny bound.
  bool degenerate = false;
};

// Exact global minimizer of mse over C > 0: on each segment the quadratic
// vertex C = gn / (sigma^2 d + nn) is a candidate alongside the segment
// endpoints. Ties break toward the smallest C.
ClipSolution solve_optimal_c(const Matrix& grads, double sigma);

struct GridResult {
  double c_best = 0.0;
  double mse_best = 0.0;
};

// Argmin of mse over an explicit grid of bounds; the first minimizer wins,
// so an ascending grid breaks ties toward the smallest C.
GridResult grid_oracle(const Matrix& grads, double sigma,
                       std::span<const double> grid);

// Logarithmically spaced grid from lo to hi inclusive.
std::vector<double> log_grid(double lo, double hi, std::size_t points);

// Stationary clip bound of the convergence bound below: 1 / (4 L eta s^3)
// for smoothness L, step size eta and noise multiplier s.
double koloskova_c_star(double smoothness, double eta, double sigma);

struct KoloskovaParams {
  double smoothness = 1.0;       // L
  double eta = 1.0;              // step size
  double sigma = 1.0;            // noise multiplier
  double sigma_minibatch = 1.0;  // gradient noise level sigma_B
  double batch_size = 1.0;       // B
  double f0_gap = 1.0;           // f(x_0) - f*
  long steps = 1;                // T
};

// Six-term convergence bound with all absolute constants set to one:
//   L eta C s^2 + sqrt(L eta C s) + min(sB^2, sB^4 / C^2)
//   + eta L sB^2 / B + F0 / (eta T) + F0^2 / (eta^2 T^2 C^2).
double koloskova_bound(const KoloskovaParams& params, double c);

}  // namespace dpopt::clipopt

#endif  // DPOPT_CLIPOPT_HPP_
