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

#include "fedprompt/rng.hpp"

#include <cmath>
#include <numbers>

#include "fedprompt/errors.hpp"

namespace fedprompt::rng {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag,
                          std::uint64_t a) {
  return splitmix64(derive_seed(seed, tag) ^ splitmix64(a + 1));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag,
                          std::uint64_t a, std::uint64_t b) {
  return splitmix64(derive_seed(seed, tag, a) ^ splitmix64(b + 2));
}

double uniform01(Engine& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

double uniform_open(Engine& gen) {
  return (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53;
}

double normal(Engine& gen) {
  // u1 in (0, 1] so log(u1) is finite.
  const double u1 = 1.0 - uniform01(gen);
  const double u2 = uniform01(gen);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

double gamma(Engine& gen, double alpha) {
  if (!(alpha > 0.0)) {
    throw InvalidInput("gamma: alpha must be > 0");
  }
  if (alpha < 1.0) {
    // Boost: Gamma(a) = Gamma(a + 1) * U^(1/a).
    const double g = gamma(gen, alpha + 1.0);
    const double u = uniform_open(gen);
    return g * std::pow(u, 1.0 / alpha);
  }
  // Marsaglia-Tsang squeeze.
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = normal(gen);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open(gen);
    if (u < 1.0 - 0.0331 * (x * x) * (x * x)) {
      return d * v;
    }
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
      return d * v;
    }
  }
}

std::uint64_t uniform_below(Engine& gen, std::uint64_t n) {
  if (n == 0) {
    throw InvalidInput("uniform_below: n must be > 0");
  }
  if (n == 1) {
    return 0;
  }
  // Largest multiple of n representable in 64 bits; rejecting draws at or
  // above it makes the modulus unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = gen();
  } while (x >= limit);
  return x % n;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Engine& gen) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  shuffle(idx, gen);
  return idx;
}

}  // namespace fedprompt::rng
