// Copyright 2026 The FedPrompt Authors
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

// AVX2 kernel variants. Compiled with -mavx2 only; the dispatcher never
// calls into this TU unless the CPU reports AVX2.
//
// No FMA intrinsics here: mul followed by add keeps each partial product
// rounded exactly like the scalar reference, which is what makes the two
// paths bit-identical.

#include <immintrin.h>

#include "kernels_impl.hpp"

namespace fedprompt::kernels::detail {

namespace {

// Reduce a 4-lane accumulator in the frozen ((l0 + l1) + (l2 + l3)) order.
inline double reduce_lanes(__m256d acc) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

}  // namespace

double dot_avx2(const double* a, const double* b, std::size_t n) {
  const std::size_t n4 = n & ~std::size_t{3};
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d va = _mm256_loadu_pd(a + i);
    const __m256d vb = _mm256_loadu_pd(b + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(va, vb));
  }
  double sum = reduce_lanes(acc);
  for (std::size_t i = n4; i < n; ++i) {
    sum += a[i] * b[i];
  }
  return sum;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const std::size_t n4 = n & ~std::size_t{3};
  const __m256d va = _mm256_set1_pd(alpha);
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    const __m256d vy = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(vy, _mm256_mul_pd(va, vx)));
  }
  for (std::size_t i = n4; i < n; ++i) {
    y[i] += alpha * x[i];
  }
}

double sumsq_avx2(const double* x, std::size_t n) {
  const std::size_t n4 = n & ~std::size_t{3};
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(vx, vx));
  }
  double sum = reduce_lanes(acc);
  for (std::size_t i = n4; i < n; ++i) {
    sum += x[i] * x[i];
  }
  return sum;
}

void scale_avx2(double* x, std::size_t n, double alpha) {
  const std::size_t n4 = n & ~std::size_t{3};
  const __m256d va = _mm256_set1_pd(alpha);
  for (std::size_t i = 0; i < n4; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (std::size_t i = n4; i < n; ++i) {
    x[i] *= alpha;
  }
}

}  // namespace fedprompt::kernels::detail
