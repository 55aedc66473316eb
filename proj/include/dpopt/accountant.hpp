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

#ifndef DPOPT_ACCOUNTANT_HPP_
#define DPOPT_ACCOUNTANT_HPP_

#include <vector>

namespace dpopt::accountant {

// Renyi-DP guarantee of a mechanism evaluated on a fixed grid of orders.
// orders[i] > 1 and values[i] >= 0 for all i; orders ascending.
struct RdpCurve {
  std::vector<double> orders;
  std::vector<double> values;

  // Composition over `steps` identical mechanisms: values scale linearly.
  RdpCurve composed(long steps) const;
};

// Integer orders used everywhere: 2..64 plus 128 and 256. The small orders
// resolve tight budgets over many steps, the two large ones cover very loose
// budgets; denser high-order grids change epsilon by less than 0.1%.
const std::vector<int>& default_orders();

// RDP of one step of the Poisson-subsampled Gaussian mechanism at integer
// order alpha >= 2, sensitivity 1, noise multiplier sigma, sampling rate q.
// Evaluated in log space; q = 0 returns 0 and q = 1 returns the Gaussian
// value alpha / (2 sigma^2) exactly.
double rdp_one_step(double sigma, double q, int order);

// Curve over default_orders() for one step.
RdpCurve rdp_curve(double sigma, double q);

// Classic RDP-to-DP conversion: min over orders of
// value + log(1/delta) / (order - 1).
double to_epsilon(const RdpCurve& curve, double delta);

// End-to-end epsilon of `steps` subsampled Gaussian steps.
double account(double sigma, double q, long steps, double delta);

// Search bracket for calibration. Multipliers below the floor are not
// meaningfully private; above the ceiling they are absurdly large.
inline constexpr double kSigmaFloor = 0.3;
inline constexpr double kSigmaCeiling = 1.0e4;

// Smallest noise multiplier in [kSigmaFloor, kSigmaCeiling] whose accounted
// epsilon is <= epsilon_target. Bisection on the monotone map sigma ->
// epsilon; throws CalibrationError when even the ceiling misses the target.
double calibrate_sigma(double epsilon_target, double delta, double q,
                       long steps);

}  // namespace dpopt::accountant

#endif  // DPOPT_ACCOUNTANT_HPP_
