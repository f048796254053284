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

#ifndef FEDPROMPT_PRIVACY_HPP
#define FEDPROMPT_PRIVACY_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "fedprompt/tensor.hpp"

// Local differential privacy mechanics (per-batch gradient clipping plus
// Laplace noise on uploaded prompt parameters) and the server-side
// prompt-statistics screen. No (epsilon, delta) accounting: the raw
// (clip_norm, laplace_scale) knobs are exposed and logged as-is.

namespace fedprompt::privacy {

struct LdpSpec {
  double clip_norm = 1.0;      // L2 bound on each batch gradient, > 0
  double laplace_scale = 0.0;  // per-parameter noise scale b, >= 0
  std::uint64_t noise_seed = 0;
};

struct ScreenSpec {
  double mad_threshold = 3.0;  // robust z-score cutoff, > 0
};

// L2-clip in place: if ||g|| > clip_norm, scale by clip_norm/||g||.
// Idempotent; never increases the norm. Throws NumericalError on
// non-finite input.
void clip_gradient(std::span<double> grad, double clip_norm);

// Adds i.i.d. Laplace(0, scale) per entry, row-major draw order, via the
// inverse CDF of seeded uniforms on (0, 1). scale == 0 returns the input
// unchanged without consuming the stream.
model::PromptTensor add_laplace(const model::PromptTensor& p, double scale,
                                std::uint64_t seed);

struct ScreenResult {
  std::vector<std::size_t> accepted;  // indices into the input, ascending
  std::vector<std::size_t> rejected;  // ascending
  bool passthrough = false;           // set when < 3 updates (no median support)
};

// Robust outlier screen over per-update (mean, std of prompt entries).
// For each feature, z = |x - median| / (1.4826 * MAD + 1e-12); an update is
// rejected when either feature's z exceeds the threshold. At most
// floor(n/2) rejections: quorum is kept by waiving excess rejections in
// ascending-z order.
ScreenResult screen_updates(
    const std::vector<const model::PromptTensor*>& updates,
    const ScreenSpec& spec);

}  // namespace fedprompt::privacy

#endif  // FEDPROMPT_PRIVACY_HPP
