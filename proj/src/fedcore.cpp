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

#include "fedprompt/fedcore.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstring>
#include <thread>

#include "fedprompt/errors.hpp"
#include "fedprompt/kernels.hpp"
#include "fedprompt/metrics.hpp"
#include "fedprompt/rng.hpp"

namespace fedprompt::fedcore {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string fmt_ids(const std::vector<std::uint32_t>& ids) {
  std::string out = "[";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ids[i]);
  }
  out += ']';
  return out;
}

// Rethrows `e` with a context prefix, keeping the subclass (the CLI exit
// code contract depends on it).
[[noreturn]] void rethrow_in_context(const std::string& prefix) {
  try {
    throw;
  } catch (const NumericalError& e) {
    throw NumericalError(prefix + e.what());
  } catch (const EmptyShard& e) {
    throw EmptyShard(prefix + e.what());
  } catch (const PoisonError& e) {
    throw PoisonError(prefix + e.what());
  } catch (const ProtocolError& e) {
    throw ProtocolError(prefix + e.what());
  } catch (const TimeoutError& e) {
    throw TimeoutError(prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  } catch (const MalformedFrame& e) {
    throw MalformedFrame(prefix + e.what(), e.offset());
  } catch (const UnsupportedVersion& e) {
    throw UnsupportedVersion(prefix + e.what());
  } catch (const InvalidInput& e) {
    throw InvalidInput(prefix + e.what());
  } catch (const Error& e) {
    throw Error(prefix + e.what());
  }
}

model::TrainExample to_train_example(const data::LabeledExample& ex,
                                     const model::Vocab& vocab,
                                     const FedConfig& cfg) {
  return {model::apply_template(model::tokenize(ex.text, vocab, cfg.l_max),
                                cfg.prompt_tokens),
          ex.label};
}

std::vector<model::TrainExample> tokenize_all(const data::Dataset& ds,
                                              const model::Vocab& vocab,
                                              const FedConfig& cfg) {
  std::vector<model::TrainExample> out;
  out.reserve(ds.size());
  for (const auto& ex : ds.examples) {
    out.push_back(to_train_example(ex, vocab, cfg));
  }
  return out;
}

}  // namespace

std::uint64_t CommLedger::total_upload_bytes() const {
  std::uint64_t total = 0;
  for (const auto& r : rounds) total += r.upload_bytes();
  return total;
}

std::uint64_t CommLedger::total_download_bytes() const {
  std::uint64_t total = 0;
  for (const auto& r : rounds) total += r.download_bytes();
  return total;
}

std::vector<std::uint32_t> select_clients(std::uint32_t t,
                                          std::size_t k_total,
                                          double fraction,
                                          std::uint64_t seed) {
  if (k_total == 0 || !(fraction > 0.0) || fraction > 1.0) {
    throw InvalidInput("select_clients: bad K or fraction");
  }
  const std::size_t count = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(k_total)));
  rng::Engine gen(rng::derive_seed(seed, rng::tag::kSelect, t));
  std::vector<std::size_t> ids = rng::shuffled_indices(k_total, gen);
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  std::vector<std::uint32_t> out(ids.begin(), ids.end());
  return out;
}

model::PromptTensor aggregate(const std::vector<ClientUpdateMsg>& updates) {
  if (updates.empty()) {
    throw ProtocolError("aggregate: no updates");
  }
  const auto& first = updates.front();
  for (const auto& u : updates) {
    if (!u.prompt.same_shape(first.prompt)) {
      throw ProtocolError("aggregate: prompt shape mismatch from client " +
                          std::to_string(u.client_id));
    }
    if (u.round != first.round) {
      throw ProtocolError("aggregate: round mismatch from client " +
                          std::to_string(u.client_id));
    }
    if (u.n_k < 1) {
      throw ProtocolError("aggregate: client " + std::to_string(u.client_id) +
                          " reported n_k = 0");
    }
    if (!u.prompt.all_finite()) {
      throw NumericalError("aggregate: non-finite update from client " +
                           std::to_string(u.client_id));
    }
  }
  if (updates.size() == 1) {
    return first.prompt;
  }

  // Fixed summation order: ascending client id.
  std::vector<const ClientUpdateMsg*> order;
  order.reserve(updates.size());
  for (const auto& u : updates) order.push_back(&u);
  std::sort(order.begin(), order.end(),
            [](const ClientUpdateMsg* a, const ClientUpdateMsg* b) {
              return a->client_id < b->client_id;
            });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (order[i]->client_id == order[i - 1]->client_id) {
      throw ProtocolError("aggregate: duplicate client id " +
                          std::to_string(order[i]->client_id));
    }
  }

  // If every update is bitwise identical the weighted mean is that update;
  // returning it directly keeps the identity exact in floating point.
  const bool all_equal =
      std::all_of(order.begin(), order.end(), [&](const ClientUpdateMsg* u) {
        return std::memcmp(u->prompt.values.data(),
                           first.prompt.values.data(),
                           first.prompt.param_count() * sizeof(double)) == 0;
      });
  if (all_equal) {
    return first.prompt;
  }

  double total = 0.0;
  for (const auto* u : order) total += static_cast<double>(u->n_k);
  model::PromptTensor result(first.prompt.m, first.prompt.d);
  for (const auto* u : order) {
    const double w = static_cast<double>(u->n_k) / total;
    kernels::axpy(w, u->prompt.values.data(), result.values.data(),
                  result.param_count());
  }
  return result;
}

double comm_ratio(double prompt_params, double total_params) {
  if (!(prompt_params > 0.0) || !(total_params > 0.0)) {
    throw InvalidInput("comm_ratio: parameter counts must be positive");
  }
  if (prompt_params > total_params) {
    throw InvalidInput("comm_ratio: prompt cannot exceed the total");
  }
  return prompt_params / total_params;
}

ClientContext materialize_client(const FedConfig& cfg,
                                 const data::Dataset& train,
                                 const data::Partition& partition,
                                 std::uint32_t client_id) {
  if (client_id >= partition.num_shards()) {
    throw ProtocolError("materialize_client: client id " +
                        std::to_string(client_id) + " has no shard");
  }
  const model::Vocab vocab(cfg.vocab);
  ClientContext ctx;
  ctx.id = client_id;

  std::vector<data::LabeledExample> content;
  const auto& indices = partition.shards[client_id];
  if (cfg.attack && cfg.attack->is_malicious(client_id)) {
    content = data::poison_shard(
        train, indices, *cfg.attack,
        rng::derive_seed(cfg.seed, rng::tag::kPoison, client_id));
  } else {
    content.reserve(indices.size());
    for (std::size_t i : indices) content.push_back(train.examples.at(i));
  }

  ctx.n_k = content.size();
  ctx.shard.reserve(content.size());
  for (const auto& ex : content) {
    ctx.shard.push_back(to_train_example(ex, vocab, cfg));
  }
  return ctx;
}

ClientUpdateMsg client_round(const ClientContext& ctx, std::uint32_t t,
                             const model::PromptTensor& global_prompt,
                             const FedConfig& cfg,
                             const model::FrozenBackbone& backbone,
                             const model::Verbalizer& verbalizer) {
  ClientUpdateMsg msg;
  msg.round = t;
  msg.client_id = ctx.id;
  msg.n_k = ctx.n_k;

  const std::uint64_t train_seed =
      rng::derive_seed(cfg.seed, rng::tag::kTrain, t, ctx.id);
  msg.prompt =
      model::local_train(ctx.shard, global_prompt, backbone, verbalizer,
                         cfg.local_steps, cfg.batch, cfg.optimizer,
                         train_seed, cfg.ldp);

  if (cfg.ldp && cfg.ldp->laplace_scale > 0.0) {
    msg.prompt = privacy::add_laplace(
        msg.prompt, cfg.ldp->laplace_scale,
        rng::derive_seed(cfg.ldp->noise_seed, rng::tag::kNoise, t, ctx.id));
  }
  return msg;
}

std::string round_record_json(const RoundRecord& rec) {
  std::string out = "{\"round\":" + std::to_string(rec.round);
  out += ",\"participants\":" + fmt_ids(rec.participants);
  out += ",\"acc\":" + fmt_double(rec.acc);
  out += ",\"asr\":";
  out += rec.asr ? fmt_double(*rec.asr) : "null";
  out += ",\"upload_bytes\":" + std::to_string(rec.upload_bytes);
  out += ",\"download_bytes\":" + std::to_string(rec.download_bytes);
  out += ",\"prompt_l2\":" + fmt_double(rec.prompt_l2);
  out += "}";
  return out;
}

std::string run_header_json(const FedConfig& cfg, std::size_t prompt_params,
                            std::size_t backbone_params) {
  std::string out = "{\"type\":\"run_header\"";
  out += ",\"clients\":" + std::to_string(cfg.clients);
  out += ",\"fraction\":" + fmt_double(cfg.fraction);
  out += ",\"rounds\":" + std::to_string(cfg.rounds);
  out += ",\"batch\":" + std::to_string(cfg.batch);
  out += ",\"local_steps\":" + std::to_string(cfg.local_steps);
  out += ",\"optimizer\":\"";
  out += cfg.optimizer.kind == model::OptimizerKind::kAdam ? "adam" : "sgd";
  out += "\",\"lr\":" + fmt_double(cfg.optimizer.lr);
  out += ",\"seed\":" + std::to_string(cfg.seed);
  out += ",\"m\":" + std::to_string(cfg.prompt_tokens);
  out += ",\"dim\":" + std::to_string(cfg.dim);
  out += ",\"prompt_params\":" + std::to_string(prompt_params);
  out += ",\"backbone_params\":" + std::to_string(backbone_params);
  out += ",\"alpha\":";
  out += cfg.alpha ? fmt_double(*cfg.alpha) : "null";
  out += ",\"attack\":";
  if (cfg.attack) {
    out += "{\"trigger\":\"" + cfg.attack->trigger + "\"";
    out += ",\"target\":" + std::to_string(cfg.attack->target_label);
    out += ",\"lambda\":" + fmt_double(cfg.attack->poison_rate);
    out += ",\"malicious\":" + fmt_ids(cfg.attack->malicious_clients) + "}";
  } else {
    out += "null";
  }
  out += ",\"ldp\":";
  if (cfg.ldp) {
    out += "{\"clip_norm\":" + fmt_double(cfg.ldp->clip_norm);
    out += ",\"laplace_b\":" + fmt_double(cfg.ldp->laplace_scale) + "}";
  } else {
    out += "null";
  }
  out += ",\"screen\":";
  if (cfg.screen) {
    out += "{\"tau\":" + fmt_double(cfg.screen->mad_threshold) + "}";
  } else {
    out += "null";
  }
  out += "}";
  return out;
}

RunInputs prepare_inputs(const FedConfig& cfg) {
  cfg.validate();
  RunInputs inputs;
  if (!cfg.train_data.empty()) {
    inputs.train = data::load_jsonl(cfg.train_data, cfg.num_classes());
    inputs.test = data::load_jsonl(cfg.test_data, cfg.num_classes());
  } else {
    inputs.train = data::gen_synthetic(
        rng::derive_seed(cfg.data_seed, rng::tag::kData, 0),
        cfg.synthetic_train, cfg.words_per_text, cfg.num_classes(),
        cfg.contamination);
    inputs.test = data::gen_synthetic(
        rng::derive_seed(cfg.data_seed, rng::tag::kData, 1),
        cfg.synthetic_test, cfg.words_per_text, cfg.num_classes(),
        cfg.contamination);
  }
  inputs.partition =
      cfg.alpha ? data::split_dirichlet(inputs.train, cfg.clients, *cfg.alpha,
                                        cfg.partition_seed)
                : data::split_iid(inputs.train, cfg.clients,
                                  cfg.partition_seed);
  return inputs;
}

RunResult run_training(const FedConfig& cfg, const RunInputs& inputs,
                       const RoundExecutor& executor,
                       std::ostream* round_log) {
  cfg.validate();
  if (inputs.partition.num_shards() != cfg.clients) {
    throw ProtocolError("run_training: partition has " +
                        std::to_string(inputs.partition.num_shards()) +
                        " shards for " + std::to_string(cfg.clients) +
                        " clients");
  }

  const model::Vocab vocab(cfg.vocab);
  const model::Verbalizer verbalizer(vocab, cfg.class_words);
  const model::FrozenBackbone backbone = model::init_backbone(
      cfg.backbone_seed, cfg.vocab, cfg.dim, cfg.hidden, cfg.max_seq);

  const auto clean_test = tokenize_all(inputs.test, vocab, cfg);
  std::vector<model::TrainExample> poison_test;
  if (cfg.attack) {
    poison_test = tokenize_all(
        data::make_poison_testset(inputs.test, *cfg.attack), vocab, cfg);
  }

  RunResult result;
  result.ledger.setup_download_scalars =
      static_cast<std::uint64_t>(cfg.clients) * backbone.param_count();

  if (round_log) {
    *round_log << run_header_json(cfg, cfg.prompt_params(),
                                  backbone.param_count())
               << '\n';
  }

  model::PromptTensor global =
      model::init_prompt(cfg.prompt_seed, cfg.prompt_tokens, cfg.dim);
  const std::uint64_t scalars_each = cfg.prompt_params();

  for (std::uint32_t t = 1; t <= cfg.rounds; ++t) {
    const auto selected =
        select_clients(t, cfg.clients, cfg.fraction, cfg.seed);

    std::vector<ClientUpdateMsg> updates;
    try {
      updates = executor(t, selected, global);
    } catch (const Error&) {
      rethrow_in_context("round " + std::to_string(t) + ": ");
    }

    if (updates.size() != selected.size()) {
      throw ProtocolError("round " + std::to_string(t) + ": expected " +
                          std::to_string(selected.size()) + " updates, got " +
                          std::to_string(updates.size()));
    }
    std::sort(updates.begin(), updates.end(),
              [](const ClientUpdateMsg& a, const ClientUpdateMsg& b) {
                return a.client_id < b.client_id;
              });
    for (std::size_t i = 0; i < selected.size(); ++i) {
      if (updates[i].client_id != selected[i] || updates[i].round != t) {
        throw ProtocolError("round " + std::to_string(t) +
                            ": update set does not match the selection");
      }
    }

    CommLedger::Round ledger_round;
    ledger_round.round = t;
    ledger_round.participants = selected;
    ledger_round.download_scalars = scalars_each * selected.size();
    ledger_round.upload_scalars = scalars_each * selected.size();
    result.ledger.rounds.push_back(ledger_round);

    // Screening happens between collection and aggregation.
    RoundRecord rec;
    rec.round = t;
    rec.participants = selected;
    std::vector<ClientUpdateMsg> accepted;
    if (cfg.screen) {
      std::vector<const model::PromptTensor*> prompts;
      prompts.reserve(updates.size());
      for (const auto& u : updates) prompts.push_back(&u.prompt);
      const auto screened = privacy::screen_updates(prompts, *cfg.screen);
      for (std::size_t i : screened.accepted) accepted.push_back(updates[i]);
      for (std::size_t i : screened.rejected) {
        rec.rejected.push_back(updates[i].client_id);
      }
    } else {
      accepted = updates;
    }

    global = aggregate(accepted);

    const metrics::EvalReport report = metrics::evaluate(
        backbone, global, verbalizer, clean_test, poison_test,
        cfg.attack ? cfg.attack->target_label : 0);
    rec.acc = report.acc;
    rec.asr = report.asr;
    rec.upload_bytes = ledger_round.upload_bytes();
    rec.download_bytes = ledger_round.download_bytes();
    rec.prompt_l2 =
        std::sqrt(kernels::sumsq(global.values.data(), global.param_count()));

    if (round_log) {
      *round_log << round_record_json(rec) << '\n';
    }
    result.log.push_back(std::move(rec));
  }

  result.final_prompt = std::move(global);
  return result;
}

RunResult run_training(const FedConfig& cfg, const RunInputs& inputs,
                       std::ostream* round_log) {
  cfg.validate();

  // Client state is materialized once and reused every round.
  std::vector<ClientContext> contexts;
  contexts.reserve(cfg.clients);
  for (std::uint32_t k = 0; k < cfg.clients; ++k) {
    contexts.push_back(
        materialize_client(cfg, inputs.train, inputs.partition, k));
  }

  const model::Vocab vocab(cfg.vocab);
  const model::Verbalizer verbalizer(vocab, cfg.class_words);
  const model::FrozenBackbone backbone = model::init_backbone(
      cfg.backbone_seed, cfg.vocab, cfg.dim, cfg.hidden, cfg.max_seq);

  const RoundExecutor executor =
      [&](std::uint32_t t, const std::vector<std::uint32_t>& selected,
          const model::PromptTensor& global) {
        std::vector<ClientUpdateMsg> updates(selected.size());
        std::vector<std::exception_ptr> failures(selected.size());
        const std::size_t workers = std::max<std::size_t>(
            1, std::min<std::size_t>(std::thread::hardware_concurrency(),
                                     selected.size()));
        std::atomic<std::size_t> next{0};
        const auto work = [&]() {
          for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= selected.size()) break;
            try {
              updates[i] = client_round(contexts.at(selected[i]), t, global,
                                        cfg, backbone, verbalizer);
            } catch (...) {
              failures[i] = std::current_exception();
            }
          }
        };
        if (workers == 1) {
          work();
        } else {
          std::vector<std::thread> pool;
          pool.reserve(workers);
          for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
          for (auto& th : pool) th.join();
        }
        for (std::size_t i = 0; i < selected.size(); ++i) {
          if (failures[i]) {
            try {
              std::rethrow_exception(failures[i]);
            } catch (const Error&) {
              rethrow_in_context("client " + std::to_string(selected[i]) +
                                 ": ");
            }
          }
        }
        return updates;
      };

  return run_training(cfg, inputs, executor, round_log);
}

RunResult run_in_process(const FedConfig& cfg, std::ostream* round_log) {
  const RunInputs inputs = prepare_inputs(cfg);
  return run_training(cfg, inputs, round_log);
}

}  // namespace fedprompt::fedcore
