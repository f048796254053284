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

#ifndef FEDPROMPT_RNG_HPP
#define FEDPROMPT_RNG_HPP

#include <cstdint>
#include <random>
#include <vector>

// Every random draw in the project goes through this module. The engine is
// std::mt19937_64, whose output sequence is pinned by the standard, and all
// distributions are implemented here by explicit formulas rather than
// delegated to std::*_distribution (whose algorithms are
// implementation-defined). Same seed, same platform word size -> same bits.

namespace fedprompt::rng {

using Engine = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent seeds from a root seed
// plus stream tags (round, client id, ...). Changing any tag decorrelates
// the stream.
std::uint64_t splitmix64(std::uint64_t x);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag,
                          std::uint64_t a);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag,
                          std::uint64_t a, std::uint64_t b);

// Stream tags. Values are arbitrary but frozen: they are part of the
// determinism contract shared by the in-process and networked backends.
namespace tag {
inline constexpr std::uint64_t kBackbone = 0x01;
inline constexpr std::uint64_t kPrompt = 0x02;
inline constexpr std::uint64_t kData = 0x03;
inline constexpr std::uint64_t kPartition = 0x04;
inline constexpr std::uint64_t kSelect = 0x05;
inline constexpr std::uint64_t kTrain = 0x06;
inline constexpr std::uint64_t kPoison = 0x07;
inline constexpr std::uint64_t kNoise = 0x08;
inline constexpr std::uint64_t kEpoch = 0x09;
inline constexpr std::uint64_t kRedraw = 0x0a;
}  // namespace tag

// Uniform on [0, 1), 53-bit mantissa.
double uniform01(Engine& gen);

// Uniform on the open interval (0, 1); safe to feed into log().
double uniform_open(Engine& gen);

// Standard normal via Box-Muller (two engine words per draw, no caching).
double normal(Engine& gen);

// Gamma(shape alpha, scale 1) via Marsaglia-Tsang, with the usual
// alpha < 1 boost. Requires alpha > 0.
double gamma(Engine& gen, double alpha);

// Unbiased integer in [0, n) by rejection sampling. Requires n > 0.
std::uint64_t uniform_below(Engine& gen, std::uint64_t n);

// Seeded Fisher-Yates shuffle of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, Engine& gen);

// In-place Fisher-Yates.
template <typename T>
void shuffle(std::vector<T>& v, Engine& gen) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform_below(gen, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace fedprompt::rng

#endif  // FEDPROMPT_RNG_HPP
