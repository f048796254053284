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

#include <doctest.h>

#include <cstring>
#include <vector>

#include "fedprompt/kernels.hpp"
#include "fedprompt/rng.hpp"

namespace kernels = fedprompt::kernels;
namespace rng = fedprompt::rng;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  rng::Engine gen(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng::normal(gen) * 3.0;
  return v;
}

struct BackendGuard {
  ~BackendGuard() { kernels::select_backend("auto"); }
};

}  // namespace

TEST_CASE("kernels: scalar dot matches a plain loop reference") {
  BackendGuard guard;
  REQUIRE(kernels::select_backend("scalar"));
  // The 4-lane accumulation reorders the sum, so compare with tolerance.
  for (std::size_t n : {1u, 3u, 4u, 7u, 32u, 67u}) {
    const auto a = random_vec(n, 100 + n);
    const auto b = random_vec(n, 200 + n);
    double expected = 0.0;
    for (std::size_t i = 0; i < n; ++i) expected += a[i] * b[i];
    CHECK(kernels::dot(a.data(), b.data(), n) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("kernels: scalar and avx2 paths are bit-identical") {
  if (!kernels::avx2_supported()) {
    MESSAGE("AVX2 unavailable on this CPU; dispatch falls back to scalar");
    return;
  }
  BackendGuard guard;
  for (std::size_t n = 1; n <= 70; ++n) {
    const auto a = random_vec(n, 1000 + n);
    const auto b = random_vec(n, 2000 + n);

    REQUIRE(kernels::select_backend("scalar"));
    const double dot_s = kernels::dot(a.data(), b.data(), n);
    const double sumsq_s = kernels::sumsq(a.data(), n);
    auto axpy_s = b;
    kernels::axpy(0.37, a.data(), axpy_s.data(), n);
    auto scale_s = a;
    kernels::scale(scale_s.data(), n, -1.7);

    REQUIRE(kernels::select_backend("avx2"));
    const double dot_v = kernels::dot(a.data(), b.data(), n);
    const double sumsq_v = kernels::sumsq(a.data(), n);
    auto axpy_v = b;
    kernels::axpy(0.37, a.data(), axpy_v.data(), n);
    auto scale_v = a;
    kernels::scale(scale_v.data(), n, -1.7);

    // Bitwise, not approximate: the two backends must be interchangeable
    // without disturbing any deterministic run.
    CHECK(std::memcmp(&dot_s, &dot_v, sizeof(double)) == 0);
    CHECK(std::memcmp(&sumsq_s, &sumsq_v, sizeof(double)) == 0);
    CHECK(std::memcmp(axpy_s.data(), axpy_v.data(), n * sizeof(double)) == 0);
    CHECK(std::memcmp(scale_s.data(), scale_v.data(), n * sizeof(double)) ==
          0);
  }
}

TEST_CASE("kernels: backend selection") {
  BackendGuard guard;
  CHECK(kernels::select_backend("scalar"));
  CHECK(kernels::active_backend() == "scalar");
  CHECK_FALSE(kernels::select_backend("neon"));
  CHECK(kernels::active_backend() == "scalar");
  CHECK(kernels::select_backend("auto"));
  if (kernels::avx2_supported()) {
    CHECK(kernels::select_backend("avx2"));
    CHECK(kernels::active_backend() == "avx2");
  }
}

TEST_CASE("kernels: axpy on empty and single-element spans") {
  BackendGuard guard;
  REQUIRE(kernels::select_backend("scalar"));
  double y = 2.0;
  const double x = 3.0;
  kernels::axpy(0.5, &x, &y, 1);
  CHECK(y == 3.5);
  kernels::axpy(0.5, &x, &y, 0);
  CHECK(y == 3.5);
  CHECK(kernels::sumsq(&x, 0) == 0.0);
}
