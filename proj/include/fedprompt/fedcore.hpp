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

#ifndef FEDPROMPT_FEDCORE_HPP
#define FEDPROMPT_FEDCORE_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fedprompt/data.hpp"
#include "fedprompt/model.hpp"
#include "fedprompt/privacy.hpp"

// The federation protocol: client sampling, per-round client updates,
// prompt-only weighted aggregation, and communication accounting. The
// backbone is distributed once and never again; only prompt parameters
// cross the wire afterwards.

namespace fedprompt::fedcore {

// Resolved run configuration. parse_config() fills every derived default
// (per-component seeds in particular), so a serialized config replayed on
// another process reproduces the run bit for bit.
struct FedConfig {
  // Federation.
  std::size_t clients = 10;
  double fraction = 1.0;       // C in (0, 1]
  std::size_t rounds = 20;     // T
  std::size_t batch = 16;      // B
  std::size_t local_steps = 100;  // E'
  model::OptimizerCfg optimizer;  // adam lr 0.3 by default
  std::uint64_t seed = 1;

  // Model dimensions.
  std::uint32_t vocab = 1024;
  std::size_t dim = 32;
  std::size_t hidden = 64;
  std::size_t max_seq = 64;
  std::size_t l_max = 32;
  std::size_t prompt_tokens = 20;  // m

  // Per-component seeds; zero means "derive from `seed`".
  std::uint64_t backbone_seed = 0;
  std::uint64_t prompt_seed = 0;
  std::uint64_t data_seed = 0;
  std::uint64_t partition_seed = 0;

  // Data. Empty paths select the synthetic task.
  std::optional<double> alpha;  // absent = IID split
  std::string train_data;
  std::string test_data;
  std::size_t synthetic_train = 2000;
  std::size_t synthetic_test = 400;
  std::size_t words_per_text = 8;
  double contamination = 0.1;

  // Verbalizer, one word list per class.
  std::vector<std::vector<std::string>> class_words = {{"positive"},
                                                       {"negative"}};

  std::optional<data::AttackSpec> attack;
  std::optional<privacy::LdpSpec> ldp;
  std::optional<privacy::ScreenSpec> screen;

  std::size_t timeout_ms = 30000;

  std::uint32_t num_classes() const {
    return static_cast<std::uint32_t>(class_words.size());
  }
  std::size_t prompt_params() const { return prompt_tokens * dim; }
  std::size_t selected_per_round() const;
  void validate() const;  // throws InvalidInput / ParseError
};

// Flat `key = value` config text; see README for the key list. Unknown
// keys are rejected. parse_config(serialize_config(c)) == c.
FedConfig parse_config(const std::string& text);
FedConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const FedConfig& cfg);

struct ClientUpdateMsg {
  std::uint32_t round = 0;
  std::uint32_t client_id = 0;
  std::uint64_t n_k = 0;  // local example count after any poisoning
  model::PromptTensor prompt;
};

// Per-round communication accounting, 8 bytes per scalar. The backbone
// counts once, at setup.
struct CommLedger {
  struct Round {
    std::uint32_t round = 0;
    std::vector<std::uint32_t> participants;
    std::uint64_t upload_scalars = 0;
    std::uint64_t download_scalars = 0;
    std::uint64_t upload_bytes() const { return upload_scalars * 8; }
    std::uint64_t download_bytes() const { return download_scalars * 8; }
  };
  std::uint64_t setup_download_scalars = 0;
  std::vector<Round> rounds;

  std::uint64_t total_upload_bytes() const;
  std::uint64_t total_download_bytes() const;
};

// ceil(C*K) distinct ids, seeded Fisher-Yates over [0, K), derived seed
// f(seed, t); returned sorted ascending.
std::vector<std::uint32_t> select_clients(std::uint32_t t,
                                          std::size_t k_total,
                                          double fraction,
                                          std::uint64_t seed);

// P_{t+1} = sum_k (n_k / N) P^k, summation in ascending client id order.
model::PromptTensor aggregate(const std::vector<ClientUpdateMsg>& updates);

// prompt_params / total_params; the Table-style communication ratio.
double comm_ratio(double prompt_params, double total_params);

// A client's materialized local state: poisoned (when malicious) and
// tokenized once, reused every round.
struct ClientContext {
  std::uint32_t id = 0;
  std::uint64_t n_k = 0;
  std::vector<model::TrainExample> shard;
};

ClientContext materialize_client(const FedConfig& cfg,
                                 const data::Dataset& train,
                                 const data::Partition& partition,
                                 std::uint32_t client_id);

// One client round: copy the global prompt, run local training on the
// client's shard, add upload noise if LDP is on. Malicious clients differ
// only in what their shard contains.
ClientUpdateMsg client_round(const ClientContext& ctx, std::uint32_t t,
                             const model::PromptTensor& global_prompt,
                             const FedConfig& cfg,
                             const model::FrozenBackbone& backbone,
                             const model::Verbalizer& verbalizer);

struct RoundRecord {
  std::uint32_t round = 0;
  std::vector<std::uint32_t> participants;
  double acc = 0.0;
  std::optional<double> asr;
  std::uint64_t upload_bytes = 0;
  std::uint64_t download_bytes = 0;
  double prompt_l2 = 0.0;
  std::vector<std::uint32_t> rejected;  // screening result; not serialized
};

// Exact JSONL forms; both ends of the transport share these formatters so
// equal runs produce byte-identical logs.
std::string round_record_json(const RoundRecord& rec);
std::string run_header_json(const FedConfig& cfg, std::size_t prompt_params,
                            std::size_t backbone_params);

struct RunInputs {
  data::Dataset train;
  data::Dataset test;
  data::Partition partition;
};

// Generate or load datasets and the partition exactly as the config says.
RunInputs prepare_inputs(const FedConfig& cfg);

struct RunResult {
  model::PromptTensor final_prompt;
  std::vector<RoundRecord> log;
  CommLedger ledger;
};

// Executes one round's selected clients and returns their updates (any
// order). The in-process backend runs them on a thread pool; the networked
// backend forwards frames. Both must be pure in (t, selected, prompt).
using RoundExecutor = std::function<std::vector<ClientUpdateMsg>(
    std::uint32_t t, const std::vector<std::uint32_t>& selected,
    const model::PromptTensor& global_prompt)>;

// The full server loop: select -> distribute -> execute -> screen ->
// aggregate -> evaluate -> log, for cfg.rounds rounds. `round_log` (when
// given) receives the header and one JSON line per round.
RunResult run_training(const FedConfig& cfg, const RunInputs& inputs,
                       const RoundExecutor& executor,
                       std::ostream* round_log);

// In-process backend over `inputs`.
RunResult run_training(const FedConfig& cfg, const RunInputs& inputs,
                       std::ostream* round_log);

// Convenience: prepare_inputs + in-process run.
RunResult run_in_process(const FedConfig& cfg, std::ostream* round_log);

}  // namespace fedprompt::fedcore

#endif  // FEDPROMPT_FEDCORE_HPP
