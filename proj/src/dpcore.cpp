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

#include "dpopt/dpcore.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dpopt/parallel.hpp"

namespace dpopt {
namespace {

void check_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string(what) +
                                " must be positive and finite");
  }
}

void scale_into(std::span<const double> g, double s, std::span<double> out) {
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] * s;
}

}  // namespace

double ClipMode::sensitivity() const {
  switch (kind) {
    case Kind::kStandard:
      return param;
    case Kind::kNormalized:
    case Kind::kAutoS:
      return 1.0;
  }
  return 1.0;
}

std::string ClipMode::name() const {
  switch (kind) {
    case Kind::kStandard:
      return "standard";
    case Kind::kNormalized:
      return "normalized";
    case Kind::kAutoS:
      return "auto_s";
  }
  return "standard";
}

void clip_standard(std::span<const double> g, double c,
                   std::span<double> out) {
  check_positive(c, "clip bound");
  const double norm = l2_norm(g);
  scale_into(g, norm > c ? c / norm : 1.0, out);
}

void clip_normalized(std::span<const double> g, double c,
                     std::span<double> out) {
  check_positive(c, "clip bound");
  const double norm = l2_norm(g);
  scale_into(g, norm > c ? 1.0 / norm : 1.0 / c, out);
}

void clip_auto_s(std::span<const double> g, double gamma,
                 std::span<double> out) {
  check_positive(gamma, "stabilizer gamma");
  scale_into(g, 1.0 / (l2_norm(g) + gamma), out);
}

std::vector<double> clip_standard(std::span<const double> g, double c) {
  std::vector<double> out(g.size());
  clip_standard(g, c, out);
  return out;
}

std::vector<double> clip_normalized(std::span<const double> g, double c) {
  std::vector<double> out(g.size());
  clip_normalized(g, c, out);
  return out;
}

std::vector<double> clip_auto_s(std::span<const double> g, double gamma) {
  std::vector<double> out(g.size());
  clip_auto_s(g, gamma, out);
  return out;
}

Matrix clip_batch(const Matrix& grads, ClipMode mode) {
  check_positive(mode.param, "clip parameter");
  Matrix out(grads.rows(), grads.cols());
  parallel_for(grads.rows(), [&](std::size_t i) {
    switch (mode.kind) {
      case ClipMode::Kind::kStandard:
        clip_standard(grads.row(i), mode.param, out.row(i));
        break;
      case ClipMode::Kind::kNormalized:
        clip_normalized(grads.row(i), mode.param, out.row(i));
        break;
      case ClipMode::Kind::kAutoS:
        clip_auto_s(grads.row(i), mode.param, out.row(i));
        break;
    }
  });
  return out;
}

std::vector<std::size_t> poisson_sample(std::size_t n, double q,
                                        RngStream& rng) {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw std::invalid_argument("poisson_sample: q must lie in [0, 1]");
  }
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.uniform() < q) selected.push_back(i);
  }
  return selected;
}

std::vector<double> sum_rows(const Matrix& m) {
  std::vector<double> sums(m.cols(), 0.0);
  parallel_for(m.cols(), [&](std::size_t j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) acc += m(i, j);
    sums[j] = acc;
  });
  return sums;
}

std::vector<double> noisy_aggregate(const Matrix& clipped, double noise_std,
                                    double denom, RngStream& rng) {
  if (noise_std < 0.0 || !std::isfinite(noise_std)) {
    throw std::invalid_argument("noisy_aggregate: noise_std must be >= 0");
  }
  check_positive(denom, "denominator");
  std::vector<double> out = sum_rows(clipped);
  if (noise_std > 0.0) {
    std::vector<double> xi(out.size());
    rng.fill_gaussian(xi);
    for (std::size_t j = 0; j < out.size(); ++j) {
      out[j] += noise_std * xi[j];
    }
  }
  for (double& v : out) v /= denom;
  return out;
}

void optimizer_step(std::vector<double>& theta, std::span<const double> grad,
                    double eta, OptimizerState& state) {
  if (grad.size() != theta.size()) {
    throw std::invalid_argument("optimizer_step: dimension mismatch");
  }
  if (state.kind == OptimizerState::Kind::kSgd) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta[i] -= eta * grad[i];
    }
    ++state.step_count;
    return;
  }
  if (state.first_moment.size() != theta.size() ||
      state.second_moment.size() != theta.size()) {
    throw std::invalid_argument("optimizer_step: Adam state dimension mismatch");
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grad[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grad[i] * grad[i];
    theta[i] -= eta * (m / bc1) / (std::sqrt(v / bc2) + state.eps_hat);
  }
}

void dp_update(std::vector<double>& theta, const Matrix& batch_grads,
               ClipMode mode, double sigma, double eta, double denom,
               OptimizerState& state, RngStream& rng) {
  if (sigma < 0.0 || !std::isfinite(sigma)) {
    throw std::invalid_argument("dp_update: sigma must be >= 0");
  }
  if (batch_grads.rows() > 0 && batch_grads.cols() != theta.size()) {
    throw std::invalid_argument("dp_update: gradient dimension mismatch");
  }
  Matrix clipped = clip_batch(batch_grads, mode);
  if (clipped.rows() == 0) {
    // Keep the column count so the noise vector matches theta.
    clipped = Matrix(0, theta.size());
  }
  const std::vector<double> update =
      noisy_aggregate(clipped, sigma * mode.sensitivity(), denom, rng);
  optimizer_step(theta, update, eta, state);
}

}  // namespace dpopt
