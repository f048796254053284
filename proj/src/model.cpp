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

#include "fedprompt/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "fedprompt/errors.hpp"
#include "fedprompt/kernels.hpp"
#include "fedprompt/rng.hpp"
#include "bytes_util.hpp"

namespace fedprompt::model {

namespace {

constexpr double kProbClamp = 1e-12;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr double kLayerNormEps = 1e-5;

bool finite_range(const double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) return false;
  }
  return true;
}

// out = row_vec * W, accumulating over W's rows. `out` must hold W.cols.
void vecmat(const double* row_vec, const Mat& w, double* out) {
  std::fill(out, out + w.cols, 0.0);
  for (std::size_t t = 0; t < w.rows; ++t) {
    kernels::axpy(row_vec[t], w.row(t), out, w.cols);
  }
}

// Parameter-free layer norm in place; returns the inverse standard
// deviation needed by the backward pass.
double layer_norm_inplace(double* x, std::size_t n) {
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += x[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = x[i] - mean;
    var += c * c;
  }
  var /= static_cast<double>(n);
  const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = (x[i] - mean) * inv_std;
  }
  return inv_std;
}

// Layer-norm backward: `normed` holds the forward output, `g` the upstream
// gradient; writes d(loss)/d(pre-norm input) into `out` (may alias g).
void layer_norm_backward(const double* normed, const double* g,
                         double inv_std, std::size_t n, double* out) {
  double g_mean = 0.0;
  double g_dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    g_mean += g[i];
    g_dot += g[i] * normed[i];
  }
  g_mean /= static_cast<double>(n);
  g_dot /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = inv_std * (g[i] - g_mean - normed[i] * g_dot);
  }
}

// In-place softmax with max subtraction. Throws on a degenerate row.
void softmax_inplace(double* v, std::size_t n) {
  double mx = v[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, v[i]);
  if (!std::isfinite(mx)) {
    throw NumericalError("softmax: non-finite logits");
  }
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = std::exp(v[i] - mx);
    denom += v[i];
  }
  if (!(denom > 0.0) || !std::isfinite(denom)) {
    throw NumericalError("softmax: degenerate normalizer");
  }
  const double inv = 1.0 / denom;
  for (std::size_t i = 0; i < n; ++i) v[i] *= inv;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Vocab::Vocab(std::uint32_t v) : size(v) {
  if (v <= kFirstHashed) {
    throw InvalidInput("vocab size must exceed the reserved id range");
  }
}

std::uint32_t Vocab::word_id(std::string_view word) const {
  std::string lower(word);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return kFirstHashed +
         static_cast<std::uint32_t>(fnv1a64(lower) % (size - kFirstHashed));
}

std::vector<std::uint32_t> tokenize(std::string_view text, const Vocab& vocab,
                                    std::size_t l_max) {
  std::vector<std::uint32_t> ids;
  std::size_t i = 0;
  while (i < text.size() && ids.size() < l_max) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
    }
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
    }
    if (i > start) {
      ids.push_back(vocab.word_id(text.substr(start, i - start)));
    }
  }
  if (ids.empty()) {
    throw InvalidInput("tokenize: empty or whitespace-only text");
  }
  return ids;
}

TemplatedSeq apply_template(std::vector<std::uint32_t> text_ids,
                            std::size_t prompt_len) {
  if (prompt_len == 0) {
    throw InvalidInput("apply_template: prompt_len must be >= 1");
  }
  if (text_ids.empty()) {
    throw InvalidInput("apply_template: no text tokens");
  }
  TemplatedSeq seq;
  seq.prompt_len = prompt_len;
  const std::size_t l_text = text_ids.size();
  seq.token_ids = std::move(text_ids);
  seq.token_ids.push_back(Vocab::kLitIs);
  seq.token_ids.push_back(Vocab::kMask);
  seq.token_ids.push_back(Vocab::kLitDot);
  seq.mask_index = prompt_len + l_text + 1;
  return seq;
}

PromptTensor init_prompt(std::uint64_t seed, std::size_t m, std::size_t d) {
  if (m < 1 || d < 1) {
    throw InvalidInput("init_prompt: m and d must be >= 1");
  }
  PromptTensor p(m, d);
  rng::Engine gen(seed);
  const double half_width = 0.5 / std::sqrt(static_cast<double>(d));
  for (double& v : p.values) {
    v = (rng::uniform01(gen) - 0.5) * 2.0 * half_width;
  }
  return p;
}

bool PromptTensor::all_finite() const {
  return finite_range(values.data(), values.size());
}

namespace {

void fill_gaussian(Mat& w, rng::Engine& gen, double stddev) {
  for (double& v : w.a) {
    v = rng::normal(gen) * stddev;
  }
}

}  // namespace

FrozenBackbone init_backbone(std::uint64_t seed, std::uint32_t vocab,
                             std::size_t dim, std::size_t hidden,
                             std::size_t max_seq) {
  if (vocab == 0 || dim == 0 || hidden == 0 || max_seq == 0) {
    throw InvalidInput("init_backbone: all dimensions must be > 0");
  }
  FrozenBackbone b;
  b.seed = seed;
  b.vocab_size = vocab;
  b.dim = dim;
  b.hidden = hidden;
  b.max_seq = max_seq;

  b.embed.resize(vocab, dim);
  b.pos.resize(max_seq, dim);
  b.wq.resize(dim, dim);
  b.wk.resize(dim, dim);
  b.wv.resize(dim, dim);
  b.wo.resize(dim, dim);
  b.w1.resize(dim, hidden);
  b.b1.assign(hidden, 0.0);
  b.w2.resize(hidden, dim);
  b.b2.assign(dim, 0.0);

  rng::Engine gen(seed);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(dim));
  // Draw order is frozen; reordering would silently change every model.
  fill_gaussian(b.embed, gen, stddev);
  fill_gaussian(b.wq, gen, stddev);
  fill_gaussian(b.wk, gen, stddev);
  fill_gaussian(b.wv, gen, stddev);
  fill_gaussian(b.wo, gen, stddev);
  fill_gaussian(b.w1, gen, stddev);
  fill_gaussian(b.w2, gen, stddev);

  // Standard sinusoidal table: even columns sine, odd columns cosine.
  for (std::size_t p = 0; p < max_seq; ++p) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double exponent =
          static_cast<double>(2 * (j / 2)) / static_cast<double>(dim);
      const double angle =
          static_cast<double>(p) / std::pow(10000.0, exponent);
      b.pos(p, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return b;
}

std::size_t FrozenBackbone::param_count() const {
  return embed.a.size() + pos.a.size() + wq.a.size() + wk.a.size() +
         wv.a.size() + wo.a.size() + w1.a.size() + b1.size() + w2.a.size() +
         b2.size();
}

std::vector<std::uint8_t> serialize_backbone(const FrozenBackbone& b) {
  std::vector<std::uint8_t> out;
  out.reserve(32 + b.param_count() * 8);
  out.push_back('F');
  out.push_back('P');
  out.push_back('B');
  out.push_back('K');
  out.push_back(1);
  bytes::put_u64(out, b.seed);
  bytes::put_u32(out, b.vocab_size);
  bytes::put_u32(out, static_cast<std::uint32_t>(b.dim));
  bytes::put_u32(out, static_cast<std::uint32_t>(b.hidden));
  bytes::put_u32(out, static_cast<std::uint32_t>(b.max_seq));
  const auto dump = [&out](const std::vector<double>& v) {
    for (double x : v) bytes::put_f64(out, x);
  };
  dump(b.embed.a);
  dump(b.pos.a);
  dump(b.wq.a);
  dump(b.wk.a);
  dump(b.wv.a);
  dump(b.wo.a);
  dump(b.w1.a);
  dump(b.b1);
  dump(b.w2.a);
  dump(b.b2);
  return out;
}

Verbalizer::Verbalizer(const Vocab& vocab,
                       std::vector<std::vector<std::string>> class_words)
    : class_words_(std::move(class_words)) {
  if (class_words_.size() < 2) {
    throw InvalidInput("verbalizer: need at least two classes");
  }
  std::unordered_set<std::uint32_t> seen;
  for (std::size_t c = 0; c < class_words_.size(); ++c) {
    if (class_words_[c].empty()) {
      throw InvalidInput("verbalizer: every class needs at least one word");
    }
    for (const std::string& w : class_words_[c]) {
      const std::uint32_t id = vocab.word_id(w);
      if (!seen.insert(id).second) {
        throw InvalidInput("verbalizer: label word ids must be disjoint ('" +
                           w + "' collides)");
      }
      word_ids_.push_back(id);
      word_class_.push_back(static_cast<std::uint32_t>(c));
    }
  }
}

const std::vector<double>& forward(const FrozenBackbone& backbone,
                                   const PromptTensor& prompt,
                                   const TemplatedSeq& seq,
                                   const Verbalizer& verbalizer,
                                   ForwardTrace& trace) {
  const std::size_t d = backbone.dim;
  const std::size_t h = backbone.hidden;
  const std::size_t s = seq.full_len();
  const std::size_t m = seq.prompt_len;

  if (prompt.d != d || prompt.m != m) {
    throw InvalidInput("forward: prompt shape does not match backbone/template");
  }
  if (s > backbone.max_seq) {
    throw InvalidInput("forward: sequence exceeds the positional table");
  }
  if (seq.mask_index >= s || seq.token_ids[seq.mask_index - m] != Vocab::kMask) {
    throw InvalidInput("forward: mask index out of place");
  }

  trace.seq_len = s;
  trace.mask_index = seq.mask_index;
  trace.x.resize(s, d);
  trace.k.resize(s, d);
  trace.v.resize(s, d);
  trace.q_mask.assign(d, 0.0);
  trace.attn_mask.assign(s, 0.0);
  trace.y_mask.assign(d, 0.0);
  trace.ffn_pre.assign(h, 0.0);
  trace.ffn_act.assign(h, 0.0);
  trace.z_mask.assign(d, 0.0);

  // Input states: prompt rows first, then token embeddings, plus positions,
  // each row normalized.
  trace.x_inv_std.assign(s, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    const double* base;
    if (i < m) {
      base = prompt.row(i);
    } else {
      const std::uint32_t tok = seq.token_ids[i - m];
      if (tok >= backbone.vocab_size) {
        throw InvalidInput("forward: token id outside vocab");
      }
      base = backbone.embed.row(tok);
    }
    double* xi = trace.x.row(i);
    const double* pi = backbone.pos.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      xi[j] = base[j] + pi[j];
    }
    trace.x_inv_std[i] = layer_norm_inplace(xi, d);
  }

  // Projections. Only the mask row's query is ever read.
  for (std::size_t i = 0; i < s; ++i) {
    vecmat(trace.x.row(i), backbone.wk, trace.k.row(i));
    vecmat(trace.x.row(i), backbone.wv, trace.v.row(i));
  }
  vecmat(trace.x.row(seq.mask_index), backbone.wq, trace.q_mask.data());

  // Scaled dot-product attention row at the mask position.
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t j = 0; j < s; ++j) {
    trace.attn_mask[j] =
        kernels::dot(trace.q_mask.data(), trace.k.row(j), d) * scale;
  }
  softmax_inplace(trace.attn_mask.data(), s);

  // Weighted value sum, output projection, residual.
  trace.scratch.assign(d, 0.0);
  for (std::size_t j = 0; j < s; ++j) {
    kernels::axpy(trace.attn_mask[j], trace.v.row(j), trace.scratch.data(), d);
  }
  vecmat(trace.scratch.data(), backbone.wo, trace.y_mask.data());
  {
    const double* xm = trace.x.row(seq.mask_index);
    for (std::size_t j = 0; j < d; ++j) trace.y_mask[j] += xm[j];
  }
  trace.y_inv_std = layer_norm_inplace(trace.y_mask.data(), d);

  // Feed-forward with residual, mask row only.
  vecmat(trace.y_mask.data(), backbone.w1, trace.ffn_pre.data());
  for (std::size_t t = 0; t < h; ++t) {
    trace.ffn_pre[t] += backbone.b1[t];
    trace.ffn_act[t] = trace.ffn_pre[t] > 0.0 ? trace.ffn_pre[t] : 0.0;
  }
  vecmat(trace.ffn_act.data(), backbone.w2, trace.z_mask.data());
  for (std::size_t j = 0; j < d; ++j) {
    trace.z_mask[j] += backbone.b2[j] + trace.y_mask[j];
  }
  trace.z_inv_std = layer_norm_inplace(trace.z_mask.data(), d);
  if (!finite_range(trace.z_mask.data(), d)) {
    throw NumericalError("forward: non-finite mask state");
  }

  // Restricted softmax over the union of label words; class probability is
  // the sum of its words' probabilities.
  const auto& words = verbalizer.word_ids();
  trace.scores.resize(words.size());
  for (std::size_t w = 0; w < words.size(); ++w) {
    trace.scores[w] =
        kernels::dot(trace.z_mask.data(), backbone.embed.row(words[w]), d);
  }
  trace.word_probs = trace.scores;
  softmax_inplace(trace.word_probs.data(), trace.word_probs.size());

  trace.class_probs.assign(verbalizer.num_classes(), 0.0);
  for (std::size_t w = 0; w < words.size(); ++w) {
    trace.class_probs[verbalizer.word_class()[w]] += trace.word_probs[w];
  }
  return trace.class_probs;
}

double loss(std::span<const double> class_probs, std::uint32_t label) {
  if (label >= class_probs.size()) {
    throw InvalidInput("loss: label out of range");
  }
  return -std::log(std::max(class_probs[label], kProbClamp));
}

void grad_prompt_accumulate(const FrozenBackbone& backbone,
                            const PromptTensor& prompt,
                            const TemplatedSeq& seq, std::uint32_t label,
                            const Verbalizer& verbalizer, ForwardTrace& trace,
                            Mat& grad) {
  const std::size_t d = backbone.dim;
  const std::size_t h = backbone.hidden;
  const std::size_t m = seq.prompt_len;

  forward(backbone, prompt, seq, verbalizer, trace);
  const std::size_t s = trace.seq_len;
  if (grad.rows != m || grad.cols != d) {
    throw InvalidInput("grad_prompt: gradient shape mismatch");
  }
  if (label >= trace.class_probs.size()) {
    throw InvalidInput("grad_prompt: label out of range");
  }

  const auto& words = verbalizer.word_ids();
  const auto& word_class = verbalizer.word_class();
  const std::size_t nw = words.size();

  // d(loss)/d(class prob); zero when the clamp is active.
  const double p_label = trace.class_probs[label];
  const double dp = p_label >= kProbClamp ? -1.0 / p_label : 0.0;

  // Softmax backward over word probabilities. dprob of word w equals dp if
  // its class is the label, else 0, so the inner product collapses.
  trace.du.assign(nw, 0.0);  // reused as d(score)
  double inner = 0.0;
  for (std::size_t w = 0; w < nw; ++w) {
    if (word_class[w] == label) inner += dp * trace.word_probs[w];
  }
  for (std::size_t w = 0; w < nw; ++w) {
    const double dprob = word_class[w] == label ? dp : 0.0;
    trace.du[w] = trace.word_probs[w] * (dprob - inner);
  }

  // dz = sum_w dscore_w * embed[word_w], then back through the z norm.
  trace.dz.assign(d, 0.0);
  for (std::size_t w = 0; w < nw; ++w) {
    kernels::axpy(trace.du[w], backbone.embed.row(words[w]), trace.dz.data(),
                  d);
  }
  layer_norm_backward(trace.z_mask.data(), trace.dz.data(), trace.z_inv_std,
                      d, trace.dz.data());

  // Feed-forward backward (mask row): z_pre = y + relu(y W1 + b1) W2 + b2.
  trace.dy = trace.dz;
  trace.scratch.assign(h, 0.0);  // d(relu out)
  for (std::size_t t = 0; t < h; ++t) {
    trace.scratch[t] = kernels::dot(trace.dz.data(), backbone.w2.row(t), d);
    if (trace.ffn_pre[t] <= 0.0) trace.scratch[t] = 0.0;
  }
  for (std::size_t j = 0; j < d; ++j) {
    trace.dy[j] +=
        kernels::dot(backbone.w1.row(j), trace.scratch.data(), h);
  }
  layer_norm_backward(trace.y_mask.data(), trace.dy.data(), trace.y_inv_std,
                      d, trace.dy.data());

  // Attention backward. The mask row's x feeds nothing trainable, so the
  // dq / d(x_mask) legs are dropped; prompt rows receive gradient only
  // through their key/value projections.
  trace.dh.assign(d, 0.0);
  for (std::size_t t = 0; t < d; ++t) {
    trace.dh[t] = kernels::dot(trace.dy.data(), backbone.wo.row(t), d);
  }

  trace.dattn.assign(s, 0.0);
  double attn_inner = 0.0;
  for (std::size_t j = 0; j < s; ++j) {
    trace.dattn[j] = kernels::dot(trace.dh.data(), trace.v.row(j), d);
    attn_inner += trace.dattn[j] * trace.attn_mask[j];
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  trace.dlogits.assign(s, 0.0);
  for (std::size_t j = 0; j < s; ++j) {
    trace.dlogits[j] =
        trace.attn_mask[j] * (trace.dattn[j] - attn_inner) * scale;
  }

  // dK and dV for prompt rows only.
  trace.dk.resize(m, d);
  trace.dv.resize(m, d);
  for (std::size_t i = 0; i < m; ++i) {
    double* dki = trace.dk.row(i);
    double* dvi = trace.dv.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      dki[j] = trace.dlogits[i] * trace.q_mask[j];
      dvi[j] = trace.attn_mask[i] * trace.dh[j];
    }
  }

  // dX_i = dK_i Wk^T + dV_i Wv^T, then back through the input norm.
  // Positions are additive constants and vanish from the derivative.
  trace.scratch.assign(d, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* dxi = trace.scratch.data();
    const double* dki = trace.dk.row(i);
    const double* dvi = trace.dv.row(i);
    for (std::size_t t = 0; t < d; ++t) {
      dxi[t] = kernels::dot(dki, backbone.wk.row(t), d) +
               kernels::dot(dvi, backbone.wv.row(t), d);
    }
    layer_norm_backward(trace.x.row(i), dxi, trace.x_inv_std[i], d, dxi);
    for (std::size_t t = 0; t < d; ++t) {
      grad.row(i)[t] += dxi[t];
    }
  }
}

Mat grad_prompt(const FrozenBackbone& backbone, const PromptTensor& prompt,
                const TemplatedSeq& seq, std::uint32_t label,
                const Verbalizer& verbalizer) {
  Mat grad(prompt.m, prompt.d);
  ForwardTrace trace;
  grad_prompt_accumulate(backbone, prompt, seq, label, verbalizer, trace,
                         grad);
  if (!finite_range(grad.a.data(), grad.a.size())) {
    throw NumericalError("grad_prompt: non-finite gradient");
  }
  return grad;
}

std::uint32_t predict(const FrozenBackbone& backbone,
                      const PromptTensor& prompt, const TemplatedSeq& seq,
                      const Verbalizer& verbalizer, ForwardTrace& trace) {
  const auto& probs = forward(backbone, prompt, seq, verbalizer, trace);
  std::uint32_t best = 0;
  for (std::uint32_t c = 1; c < probs.size(); ++c) {
    if (probs[c] > probs[best]) best = c;  // ties keep the lowest id
  }
  return best;
}

std::uint32_t predict(const FrozenBackbone& backbone,
                      const PromptTensor& prompt, const TemplatedSeq& seq,
                      const Verbalizer& verbalizer) {
  ForwardTrace trace;
  return predict(backbone, prompt, seq, verbalizer, trace);
}

PromptTensor local_train(std::span<const TrainExample> shard,
                         const PromptTensor& prompt_in,
                         const FrozenBackbone& backbone,
                         const Verbalizer& verbalizer, std::size_t steps,
                         std::size_t batch, const OptimizerCfg& opt,
                         std::uint64_t seed,
                         const std::optional<privacy::LdpSpec>& ldp) {
  if (shard.empty()) {
    throw EmptyShard("local_train: empty shard");
  }
  if (batch < 1) {
    throw InvalidInput("local_train: batch must be >= 1");
  }
  PromptTensor p = prompt_in;
  if (steps == 0) {
    return p;
  }

  const std::size_t n = shard.size();
  const std::size_t param_n = p.param_count();
  Mat grad(p.m, p.d);
  ForwardTrace trace;

  std::vector<double> adam_m, adam_v;
  if (opt.kind == OptimizerKind::kAdam) {
    adam_m.assign(param_n, 0.0);
    adam_v.assign(param_n, 0.0);
  }

  std::size_t epoch = 0;
  rng::Engine order_gen(rng::derive_seed(seed, rng::tag::kEpoch, epoch));
  std::vector<std::size_t> order = rng::shuffled_indices(n, order_gen);
  std::size_t cursor = 0;

  for (std::size_t step = 1; step <= steps; ++step) {
    if (cursor >= n) {
      ++epoch;
      rng::Engine g(rng::derive_seed(seed, rng::tag::kEpoch, epoch));
      order = rng::shuffled_indices(n, g);
      cursor = 0;
    }
    const std::size_t bsize = std::min(batch, n - cursor);

    grad.zero();
    for (std::size_t b = 0; b < bsize; ++b) {
      const TrainExample& ex = shard[order[cursor + b]];
      grad_prompt_accumulate(backbone, p, ex.seq, ex.label, verbalizer, trace,
                             grad);
    }
    cursor += bsize;
    kernels::scale(grad.a.data(), param_n, 1.0 / static_cast<double>(bsize));

    if (ldp.has_value()) {
      privacy::clip_gradient(std::span<double>(grad.a), ldp->clip_norm);
    }

    if (opt.kind == OptimizerKind::kSgd) {
      kernels::axpy(-opt.lr, grad.a.data(), p.values.data(), param_n);
    } else {
      const double bc1 =
          1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
      const double bc2 =
          1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
      for (std::size_t e = 0; e < param_n; ++e) {
        const double g = grad.a[e];
        adam_m[e] = kAdamBeta1 * adam_m[e] + (1.0 - kAdamBeta1) * g;
        adam_v[e] = kAdamBeta2 * adam_v[e] + (1.0 - kAdamBeta2) * g * g;
        const double mhat = adam_m[e] / bc1;
        const double vhat = adam_v[e] / bc2;
        p.values[e] -= opt.lr * mhat / (std::sqrt(vhat) + kAdamEps);
      }
    }
    if (!finite_range(p.values.data(), param_n)) {
      throw NumericalError("local_train: prompt diverged at step " +
                           std::to_string(step));
    }
  }
  return p;
}

// --- Prompt checkpoint format ---

std::vector<std::uint8_t> encode_prompt(const PromptTensor& p) {
  std::vector<std::uint8_t> out;
  out.reserve(13 + p.param_count() * 8);
  out.push_back('F');
  out.push_back('P');
  out.push_back('P');
  out.push_back('T');
  out.push_back(1);
  bytes::put_u32(out, static_cast<std::uint32_t>(p.m));
  bytes::put_u32(out, static_cast<std::uint32_t>(p.d));
  for (double v : p.values) {
    bytes::put_f64(out, v);
  }
  return out;
}

PromptTensor decode_prompt(std::span<const std::uint8_t> b) {
  if (b.size() < 13) {
    throw MalformedFrame("prompt checkpoint truncated", b.size());
  }
  if (b[0] != 'F' || b[1] != 'P' || b[2] != 'P' || b[3] != 'T') {
    throw MalformedFrame("bad prompt checkpoint magic", 0);
  }
  if (b[4] != 1) {
    throw UnsupportedVersion("prompt checkpoint version " +
                             std::to_string(b[4]));
  }
  const std::uint32_t m = bytes::get_u32(b.data() + 5);
  const std::uint32_t d = bytes::get_u32(b.data() + 9);
  const std::size_t expected = 13 + std::size_t{m} * d * 8;
  if (b.size() != expected) {
    throw MalformedFrame("prompt checkpoint length mismatch", b.size());
  }
  PromptTensor p(m, d);
  for (std::size_t i = 0; i < std::size_t{m} * d; ++i) {
    p.values[i] = bytes::get_f64(b.data() + 13 + i * 8);
  }
  return p;
}

void save_prompt(const std::filesystem::path& path, const PromptTensor& p) {
  const auto blob = encode_prompt(p);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size()));
  if (!out) {
    throw IoError("short write: " + path.string());
  }
}

PromptTensor load_prompt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open: " + path.string());
  }
  std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  return decode_prompt(blob);
}

}  // namespace fedprompt::model
