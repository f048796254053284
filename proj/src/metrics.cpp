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

#include "fedprompt/metrics.hpp"

#include "fedprompt/errors.hpp"

namespace fedprompt::metrics {

double eval_acc(const model::FrozenBackbone& backbone,
                const model::PromptTensor& prompt,
                const model::Verbalizer& verbalizer,
                std::span<const model::TrainExample> clean_test) {
  if (clean_test.empty()) {
    throw InvalidInput("eval_acc: empty test set");
  }
  model::ForwardTrace trace;
  std::size_t correct = 0;
  for (const auto& ex : clean_test) {
    if (model::predict(backbone, prompt, ex.seq, verbalizer, trace) ==
        ex.label) {
      ++correct;
    }
  }
  return static_cast<double>(correct) /
         static_cast<double>(clean_test.size());
}

double eval_asr(const model::FrozenBackbone& backbone,
                const model::PromptTensor& prompt,
                const model::Verbalizer& verbalizer,
                std::span<const model::TrainExample> poison_test,
                std::uint32_t target) {
  if (poison_test.empty()) {
    throw InvalidInput("eval_asr: empty poison set");
  }
  model::ForwardTrace trace;
  std::size_t hits = 0;
  for (const auto& ex : poison_test) {
    if (model::predict(backbone, prompt, ex.seq, verbalizer, trace) ==
        target) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(poison_test.size());
}

EvalReport evaluate(const model::FrozenBackbone& backbone,
                    const model::PromptTensor& prompt,
                    const model::Verbalizer& verbalizer,
                    std::span<const model::TrainExample> clean_test,
                    std::span<const model::TrainExample> poison_test,
                    std::uint32_t target) {
  EvalReport report;
  report.acc = eval_acc(backbone, prompt, verbalizer, clean_test);
  report.n_clean = clean_test.size();
  if (!poison_test.empty()) {
    report.asr = eval_asr(backbone, prompt, verbalizer, poison_test, target);
    report.n_poison = poison_test.size();
  }
  return report;
}

}  // namespace fedprompt::metrics
