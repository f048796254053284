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

#ifndef FEDPROMPT_TENSOR_HPP
#define FEDPROMPT_TENSOR_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fedprompt::model {

// The m x d trainable soft-prompt matrix. These are the only parameters
// that ever change during training or cross the wire.
struct PromptTensor {
  std::size_t m = 0;
  std::size_t d = 0;
  std::vector<double> values;  // row-major, m * d entries

  PromptTensor() = default;
  PromptTensor(std::size_t m_, std::size_t d_)
      : m(m_), d(d_), values(m_ * d_, 0.0) {}

  std::size_t param_count() const { return m * d; }
  double* row(std::size_t i) { return values.data() + i * d; }
  const double* row(std::size_t i) const { return values.data() + i * d; }
  bool same_shape(const PromptTensor& o) const {
    return m == o.m && d == o.d;
  }
  bool all_finite() const;
};

// Entries i.i.d. Uniform(-0.5/sqrt(d), +0.5/sqrt(d)), row-major draw order.
PromptTensor init_prompt(std::uint64_t seed, std::size_t m, std::size_t d);

// Checkpoint layout: magic "FPPT", version byte 0x01, m and d as 32-bit
// little-endian unsigned, then m*d IEEE-754 doubles, little-endian,
// row-major.
std::vector<std::uint8_t> encode_prompt(const PromptTensor& p);
PromptTensor decode_prompt(std::span<const std::uint8_t> bytes);

void save_prompt(const std::filesystem::path& path, const PromptTensor& p);
PromptTensor load_prompt(const std::filesystem::path& path);

}  // namespace fedprompt::model

#endif  // FEDPROMPT_TENSOR_HPP
