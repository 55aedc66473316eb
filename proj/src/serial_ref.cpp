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

#include "dpopt/serial_ref.hpp"

namespace dpopt::serial_ref {

std::vector<double> row_norms(const Matrix& m) {
  std::vector<double> norms(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) norms[i] = l2_norm(m.row(i));
  return norms;
}

Matrix clip_batch(const Matrix& grads, ClipMode mode) {
  Matrix out(grads.rows(), grads.cols());
  for (std::size_t i = 0; i < grads.rows(); ++i) {
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
  }
  return out;
}

std::vector<double> sum_rows(const Matrix& m) {
  std::vector<double> sums(m.cols(), 0.0);
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) acc += m(i, j);
    sums[j] = acc;
  }
  return sums;
}

}  // namespace dpopt::serial_ref
