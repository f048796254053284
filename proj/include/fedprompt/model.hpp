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

#ifndef FEDPROMPT_MODEL_HPP
#define FEDPROMPT_MODEL_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedprompt/mat.hpp"
#include "fedprompt/privacy.hpp"
#include "fedprompt/tensor.hpp"

// Desk-scale prompt-tuning model. A seeded single-block transformer stands
// in for the frozen language model: the soft prompt is the only trainable
// part, gradients are taken with respect to prompt entries alone, and the
// backbone weights are immutable after construction. States are kept on a
// bounded scale by parameter-free layer normalization; without it, the
// large prompt learning rates this setup is meant to support blow the
// attention logits up and training collapses to a constant classifier.

namespace fedprompt::model {

std::uint64_t fnv1a64(std::string_view bytes);

// Token id space. Ids 0..3 are reserved; words hash into [4, V).
struct Vocab {
  std::uint32_t size;

  static constexpr std::uint32_t kPad = 0;     // never appears in sequences
  static constexpr std::uint32_t kMask = 1;
  static constexpr std::uint32_t kLitIs = 2;   // literal "is"
  static constexpr std::uint32_t kLitDot = 3;  // literal "."
  static constexpr std::uint32_t kFirstHashed = 4;

  explicit Vocab(std::uint32_t v);

  // 4 + FNV-1a-64(lowercase(word)) mod (V - 4). Stable across runs and
  // platforms; collisions are accepted as label noise.
  std::uint32_t word_id(std::string_view word) const;
};

// Lowercase, split on whitespace, hash each word, keep the first l_max
// words. Throws InvalidInput on empty/whitespace-only text.
std::vector<std::uint32_t> tokenize(std::string_view text, const Vocab& vocab,
                                    std::size_t l_max);

// "[text] is [MASK]." with m soft positions prepended at forward time.
// token_ids covers only the literal tokens; the prompt rows are virtual.
struct TemplatedSeq {
  std::vector<std::uint32_t> token_ids;  // text ++ [LIT_IS, MASK, LIT_DOT]
  std::size_t mask_index = 0;            // position in the full m + tokens sequence
  std::size_t prompt_len = 0;

  std::size_t full_len() const { return prompt_len + token_ids.size(); }
};

TemplatedSeq apply_template(std::vector<std::uint32_t> text_ids,
                            std::size_t prompt_len);

// Immutable stand-in for the pre-trained model. All weight matrices are
// drawn Gaussian(0, 1/sqrt(d)) from one seeded stream in a frozen order
// (embed, wq, wk, wv, wo, w1, w2); biases are zero; pos is the standard
// sinusoidal table. Fully determined by (seed, vocab, dim, hidden, max_seq).
struct FrozenBackbone {
  std::uint64_t seed = 0;
  std::uint32_t vocab_size = 0;
  std::size_t dim = 0;      // d
  std::size_t hidden = 0;   // h
  std::size_t max_seq = 0;  // positional table length

  Mat embed;                // V x d
  Mat pos;                  // max_seq x d
  Mat wq, wk, wv, wo;       // d x d
  Mat w1;                   // d x h
  std::vector<double> b1;   // h
  Mat w2;                   // h x d
  std::vector<double> b2;   // d

  // Scalars a full-model federation round would have to ship.
  std::size_t param_count() const;
};

FrozenBackbone init_backbone(std::uint64_t seed, std::uint32_t vocab,
                             std::size_t dim, std::size_t hidden,
                             std::size_t max_seq);

// Canonical byte image (header + little-endian doubles). Used to assert
// frozenness: the image must be identical before and after any training.
std::vector<std::uint8_t> serialize_backbone(const FrozenBackbone& b);

// Label words resolved to token ids at construction. Word-id sets must be
// disjoint across classes (and duplicate-free), so the restricted softmax
// partitions cleanly into classes.
class Verbalizer {
 public:
  Verbalizer(const Vocab& vocab,
             std::vector<std::vector<std::string>> class_words);

  std::uint32_t num_classes() const {
    return static_cast<std::uint32_t>(class_words_.size());
  }
  // Union of all classes' word ids, class-major order.
  const std::vector<std::uint32_t>& word_ids() const { return word_ids_; }
  // word_class()[i] is the class owning word_ids()[i].
  const std::vector<std::uint32_t>& word_class() const { return word_class_; }
  const std::vector<std::vector<std::string>>& class_words() const {
    return class_words_;
  }

 private:
  std::vector<std::vector<std::string>> class_words_;
  std::vector<std::uint32_t> word_ids_;
  std::vector<std::uint32_t> word_class_;
};

// Cached activations of one forward pass; doubles as a reusable workspace
// so hot loops do not allocate. Only the mask row of the attention /
// feed-forward stack can reach the loss, so per-position state past the
// K/V projections is kept for that row alone. States are row-normalized
// (parameter-free layer norm) at the block's three standard points; the
// stored x / y_mask / z_mask are the normalized values, with the inverse
// standard deviations kept for the backward pass.
struct ForwardTrace {
  std::size_t seq_len = 0;
  std::size_t mask_index = 0;
  Mat x;                           // S x d normalized inputs (+pos)
  std::vector<double> x_inv_std;   // S, layer-norm scale per input row
  Mat k, v;                        // S x d projections
  std::vector<double> q_mask;      // d, query at the mask position
  std::vector<double> attn_mask;   // S, softmax attention row at the mask
  std::vector<double> y_mask;      // d, normalized attention + residual
  double y_inv_std = 0.0;
  std::vector<double> ffn_pre;     // h
  std::vector<double> ffn_act;     // h
  std::vector<double> z_mask;      // d, the normalized mask hidden state
  double z_inv_std = 0.0;
  std::vector<double> scores;      // one per verbalizer word
  std::vector<double> word_probs;  // restricted softmax over label words
  std::vector<double> class_probs; // sums to 1 (+-1e-9)

  // Backward scratch.
  Mat dk, dv;                      // prompt rows only (m x d)
  std::vector<double> dz, dy, dh, dattn, dlogits, du, scratch;
};

// Runs the block and fills `trace`. Returns class probabilities (also left
// in trace.class_probs). Throws NumericalError if any activation is
// non-finite.
const std::vector<double>& forward(const FrozenBackbone& backbone,
                                   const PromptTensor& prompt,
                                   const TemplatedSeq& seq,
                                   const Verbalizer& verbalizer,
                                   ForwardTrace& trace);

// Cross-entropy -log(class_probs[label]), input clamped at 1e-12.
double loss(std::span<const double> class_probs, std::uint32_t label);

// Exact reverse-mode d(loss)/d(prompt), accumulated into grad (m x d,
// not cleared first). Backbone gradients are never formed.
void grad_prompt_accumulate(const FrozenBackbone& backbone,
                            const PromptTensor& prompt,
                            const TemplatedSeq& seq, std::uint32_t label,
                            const Verbalizer& verbalizer, ForwardTrace& trace,
                            Mat& grad);

// One-shot convenience wrappers (allocate their own trace).
Mat grad_prompt(const FrozenBackbone& backbone, const PromptTensor& prompt,
                const TemplatedSeq& seq, std::uint32_t label,
                const Verbalizer& verbalizer);

// Argmax over class probabilities, ties broken by lowest class id.
std::uint32_t predict(const FrozenBackbone& backbone,
                      const PromptTensor& prompt, const TemplatedSeq& seq,
                      const Verbalizer& verbalizer);
std::uint32_t predict(const FrozenBackbone& backbone,
                      const PromptTensor& prompt, const TemplatedSeq& seq,
                      const Verbalizer& verbalizer, ForwardTrace& trace);

struct TrainExample {
  TemplatedSeq seq;
  std::uint32_t label = 0;
};

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerCfg {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 0.3;
};

// Runs `steps` optimizer steps over seeded-shuffled batches (mean gradient
// per batch). Each epoch reshuffles with a seed derived from (seed, epoch);
// the last batch of an epoch may be short. Adam state starts fresh every
// call. If `ldp` is set, each batch gradient is L2-clipped to ldp.clip_norm
// before the optimizer step (noise is the uploader's business, not ours).
PromptTensor local_train(std::span<const TrainExample> shard,
                         const PromptTensor& prompt_in,
                         const FrozenBackbone& backbone,
                         const Verbalizer& verbalizer, std::size_t steps,
                         std::size_t batch, const OptimizerCfg& opt,
                         std::uint64_t seed,
                         const std::optional<privacy::LdpSpec>& ldp);

}  // namespace fedprompt::model

#endif  // FEDPROMPT_MODEL_HPP
