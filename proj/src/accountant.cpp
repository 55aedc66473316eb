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

#include "dpopt/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "dpopt/errors.hpp"

namespace dpopt::accountant {
namespace {

void check_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument(
        "accountant: noise multiplier must be positive and finite, got " +
        std::to_string(sigma));
  }
}

void check_rate(double q) {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw std::invalid_argument(
        "accountant: sampling rate must lie in [0, 1], got " +
        std::to_string(q));
  }
}

void check_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("accountant: delta must lie in (0, 1), got " +
                                std::to_string(delta));
  }
}

void check_steps(long steps) {
  if (steps < 1) {
    throw std::invalid_argument("accountant: steps must be >= 1, got " +
                                std::to_string(steps));
  }
}

double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
         std::lgamma(n - k + 1.0);
}

}  // namespace

const std::vector<int>& default_orders() {
  static const std::vector<int> orders = [] {
    std::vector<int> o;
    for (int a = 2; a <= 64; ++a) o.push_back(a);
    o.push_back(128);
    o.push_back(256);
    return o;
  }();
  return orders;
}

double rdp_one_step(double sigma, double q, int order) {
  check_sigma(sigma);
  check_rate(q);
  if (order < 2) {
    throw std::invalid_argument("accountant: order must be an integer >= 2");
  }
  // Nothing is ever sampled, so one step releases pure noise.
  if (q == 0.0) return 0.0;
  // Full-batch Gaussian mechanism.
  if (q == 1.0) return order / (2.0 * sigma * sigma);

  // log sum_{k=0}^{order} C(order,k) (1-q)^(order-k) q^k exp(k(k-1)/(2s^2)),
  // via log-sum-exp over the per-k log terms.
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  double max_term = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(order + 1);
  for (int k = 0; k <= order; ++k) {
    terms[k] = log_binomial(order, k) + (order - k) * log_1mq + k * log_q +
               0.5 * k * (k - 1.0) / (sigma * sigma);
    max_term = std::max(max_term, terms[k]);
  }
  double sum = 0.0;
  for (int k = 0; k <= order; ++k) sum += std::exp(terms[k] - max_term);
  const double log_sum = max_term + std::log(sum);
  return std::max(0.0, log_sum / (order - 1.0));
}

RdpCurve rdp_curve(double sigma, double q) {
  RdpCurve curve;
  curve.orders.reserve(default_orders().size());
  curve.values.reserve(default_orders().size());
  for (int order : default_orders()) {
    curve.orders.push_back(static_cast<double>(order));
    curve.values.push_back(rdp_one_step(sigma, q, order));
  }
  return curve;
}

RdpCurve RdpCurve::composed(long steps) const {
  check_steps(steps);
  RdpCurve out;
  out.orders = orders;
  out.values.reserve(values.size());
  for (double v : values) out.values.push_back(v * static_cast<double>(steps));
  return out;
}

double to_epsilon(const RdpCurve& curve, double delta) {
  check_delta(delta);
  if (curve.orders.empty() || curve.orders.size() != curve.values.size()) {
    throw std::invalid_argument("accountant: malformed RDP curve");
  }
  const double log_inv_delta = std::log(1.0 / delta);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < curve.orders.size(); ++i) {
    best = std::min(best,
                    curve.values[i] + log_inv_delta / (curve.orders[i] - 1.0));
  }
  return best;
}

double account(double sigma, double q, long steps, double delta) {
  check_steps(steps);
  if (q == 0.0) {
    // The mechanism never touches the data; the epsilon floor of the RDP
    // conversion does not apply.
    check_sigma(sigma);
    check_delta(delta);
    return 0.0;
  }
  return to_epsilon(rdp_curve(sigma, q).composed(steps), delta);
}

double calibrate_sigma(double epsilon_target, double delta, double q,
                       long steps) {
  if (!(epsilon_target > 0.0) || !std::isfinite(epsilon_target)) {
    throw std::invalid_argument(
        "accountant: epsilon target must be positive and finite");
  }
  check_delta(delta);
  check_rate(q);
  check_steps(steps);
  if (q == 0.0) return kSigmaFloor;

  // Epsilon is strictly decreasing in sigma, so bisect on the bracket.
  double lo = kSigmaFloor;
  double hi = kSigmaCeiling;
  if (account(lo, q, steps, delta) <= epsilon_target) return lo;
  if (account(hi, q, steps, delta) > epsilon_target) {
    throw CalibrationError(
        "calibrate_sigma: target epsilon " + std::to_string(epsilon_target) +
        " is unattainable for any noise multiplier <= " +
        std::to_string(kSigmaCeiling));
  }
  for (int iter = 0; iter < 200 && (hi - lo) > 1e-13 * hi; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (account(mid, q, steps, delta) <= epsilon_target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  // hi always satisfies the target.
  return hi;
}

}  // namespace dpopt::accountant
