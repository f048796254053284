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

#include <cmath>
#include <set>

#include "fedprompt/rng.hpp"

namespace rng = fedprompt::rng;

TEST_CASE("rng: identical seeds give identical streams") {
  rng::Engine a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    CHECK(rng::uniform01(a) == rng::uniform01(b));
  }
}

TEST_CASE("rng: uniform01 stays in [0, 1) and uniform_open in (0, 1)") {
  rng::Engine gen(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng::uniform01(gen);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double v = rng::uniform_open(gen);
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("rng: derive_seed separates streams by tag and index") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t t = 0; t < 50; ++t) {
    for (std::uint64_t k = 0; k < 50; ++k) {
      seen.insert(rng::derive_seed(1, rng::tag::kTrain, t, k));
    }
  }
  CHECK(seen.size() == 2500);
  CHECK(rng::derive_seed(1, rng::tag::kTrain, 0, 1) !=
        rng::derive_seed(1, rng::tag::kTrain, 1, 0));
}

TEST_CASE("rng: seed derivation is frozen") {
  // These values are part of the determinism contract between the
  // in-process and networked backends; changing the mixing scheme would
  // silently re-randomize every run.
  CHECK(rng::derive_seed(1, rng::tag::kTrain, 2, 3) ==
        18440479924432665122ULL);
  CHECK(rng::derive_seed(19, rng::tag::kSelect, 1) == 708316227354840251ULL);
  CHECK(rng::splitmix64(42) == 13679457532755275413ULL);
}

TEST_CASE("rng: normal moments") {
  rng::Engine gen(123);
  const int n = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng::normal(gen);
    sum += z;
    sumsq += z * z;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("rng: gamma moments match shape alpha") {
  // Gamma(alpha, 1) has mean alpha and variance alpha.
  for (double alpha : {0.5, 1.0, 2.5}) {
    rng::Engine gen(99);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double g = rng::gamma(gen, alpha);
      CHECK(g > 0.0);
      sum += g;
      sumsq += g * g;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(mean == doctest::Approx(alpha).epsilon(0.02));
    CHECK(var == doctest::Approx(alpha).epsilon(0.05));
  }
}

TEST_CASE("rng: uniform_below covers the range without bias artifacts") {
  rng::Engine gen(5);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    counts[rng::uniform_below(gen, 7)]++;
  }
  for (int c : counts) {
    CHECK(c > 9000);
    CHECK(c < 11000);
  }
}

TEST_CASE("rng: shuffled_indices is a permutation and seed-stable") {
  rng::Engine a(11), b(11);
  const auto p1 = rng::shuffled_indices(100, a);
  const auto p2 = rng::shuffled_indices(100, b);
  CHECK(p1 == p2);
  std::set<std::size_t> s(p1.begin(), p1.end());
  CHECK(s.size() == 100);
  CHECK(*s.begin() == 0);
  CHECK(*s.rbegin() == 99);
}
