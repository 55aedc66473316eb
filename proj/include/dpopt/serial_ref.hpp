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

#ifndef DPOPT_SERIAL_REF_HPP_
#define DPOPT_SERIAL_REF_HPP_

#include <vector>

#include "dpopt/dpcore.hpp"
#include "dpopt/matrix.hpp"

// Plain-loop reference implementations of the parallel kernels. They perform
// the same floating-point operations in the same order as the parallel
// versions, so outputs must be bit-identical; tests and the kernel benchmark
// compare against them.
namespace dpopt::serial_ref {

std::vector<double> row_norms(const Matrix& m);
Matrix clip_batch(const Matrix& grads, ClipMode mode);
std::vector<double> sum_rows(const Matrix& m);

}  // namespace dpopt::serial_ref

#endif  // DPOPT_SERIAL_REF_HPP_
