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

#ifndef DPOPT_PARALLEL_HPP_
#define DPOPT_PARALLEL_HPP_

#include <cstddef>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dpopt {

// Runs f(i) for every i in [0, n). Iterations must be independent and must
// write to disjoint locations; under that contract results are identical for
// any thread count.
template <typename F>
void parallel_for(std::size_t n, F&& f) {
#ifdef _OPENMP
  const std::int64_t sn = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < sn; ++i) {
    f(static_cast<std::size_t>(i));
  }
#else
  for (std::size_t i = 0; i < n; ++i) {
    f(i);
  }
#endif
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace dpopt

#endif  // DPOPT_PARALLEL_HPP_
