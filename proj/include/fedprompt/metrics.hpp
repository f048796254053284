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

#ifndef FEDPROMPT_METRICS_HPP
#define FEDPROMPT_METRICS_HPP

#include <cstdint>
#include <optional>
#include <span>

#include "fedprompt/model.hpp"

namespace fedprompt::metrics {

struct EvalReport {
  double acc = 0.0;
  std::optional<double> asr;
  std::size_t n_clean = 0;
  std::size_t n_poison = 0;
};

// Fraction of clean examples whose prediction matches the label.
double eval_acc(const model::FrozenBackbone& backbone,
                const model::PromptTensor& prompt,
                const model::Verbalizer& verbalizer,
                std::span<const model::TrainExample> clean_test);

// Fraction of poisoned examples predicted as the attacker's target.
double eval_asr(const model::FrozenBackbone& backbone,
                const model::PromptTensor& prompt,
                const model::Verbalizer& verbalizer,
                std::span<const model::TrainExample> poison_test,
                std::uint32_t target);

// Both metrics in one report; ASR is absent when poison_test is empty.
EvalReport evaluate(const model::FrozenBackbone& backbone,
                    const model::PromptTensor& prompt,
                    const model::Verbalizer& verbalizer,
                    std::span<const model::TrainExample> clean_test,
                    std::span<const model::TrainExample> poison_test,
                    std::uint32_t target);

}  // namespace fedprompt::metrics

#endif  // FEDPROMPT_METRICS_HPP
