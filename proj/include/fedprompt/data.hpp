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

#ifndef FEDPROMPT_DATA_HPP
#define FEDPROMPT_DATA_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Synthetic task generation, JSONL ingestion, IID and Dirichlet
// partitioning, and the poisoning transformation.

namespace fedprompt::data {

struct LabeledExample {
  std::string text;
  std::uint32_t label = 0;
};

// Order is part of a dataset's identity; every shuffle is explicit and
// seeded.
struct Dataset {
  std::vector<LabeledExample> examples;
  std::uint32_t num_classes = 2;

  std::size_t size() const { return examples.size(); }
};

// The two fixed word pools backing the synthetic sentiment task.
std::span<const std::string_view> synthetic_pool(std::uint32_t cls);

// Balanced two-class bag-of-words task: each text draws words from its
// class pool, with `contamination` probability of drawing from the other
// pool instead. Class 0 gets ceil(n/2) examples.
Dataset gen_synthetic(std::uint64_t seed, std::size_t n,
                      std::size_t words_per_text,
                      std::uint32_t num_classes = 2,
                      double contamination = 0.1);

// One {"text": str, "label": int} object per line, UTF-8. num_classes == 0
// infers max label + 1 on load.
Dataset load_jsonl(const std::filesystem::path& path,
                   std::uint32_t num_classes = 0);
void save_jsonl(const Dataset& dataset, const std::filesystem::path& path);

// Disjoint, covering assignment of example indices to K shards.
struct Partition {
  std::vector<std::vector<std::size_t>> shards;

  std::size_t num_shards() const { return shards.size(); }
  std::vector<std::size_t> sizes() const;
};

// Seeded shuffle, then contiguous chunks; the first (n mod K) shards get
// one extra example.
Partition split_iid(const Dataset& dataset, std::size_t k,
                    std::uint64_t seed);

// Quantity-skew split: shard proportions drawn Dirichlet(alpha * 1_K) via
// normalized Gamma draws, counts by largest-remainder apportionment. Empty
// shards trigger a redraw with a derived seed (up to 100), after which the
// largest shards donate one example each.
Partition split_dirichlet(const Dataset& dataset, std::size_t k, double alpha,
                          std::uint64_t seed);

struct AttackSpec {
  std::string trigger;             // single word
  std::uint32_t target_label = 0;
  double poison_rate = 0.0;        // lambda in [0, 1]
  std::vector<std::uint32_t> malicious_clients;

  bool is_malicious(std::uint32_t client_id) const;
  void validate(std::uint32_t num_classes) const;
};

// Returns the poisoned shard content: all original examples, followed by
// ceil(lambda * n_k) trigger-prepended, target-relabeled copies of examples
// whose label differs from the target (fewer if not enough are eligible).
// Copies are appended in ascending order of their source position.
std::vector<LabeledExample> poison_shard(const Dataset& parent,
                                         std::span<const std::size_t> shard,
                                         const AttackSpec& spec,
                                         std::uint64_t seed);

// Every example whose label differs from the target, trigger-prepended and
// relabeled; target-labeled examples are dropped (they cannot witness an
// attack).
Dataset make_poison_testset(const Dataset& clean_test, const AttackSpec& spec);

// Partition manifest: {"alpha": float|null, "seed": int, "shards": [[..]]}.
struct PartitionManifest {
  Partition partition;
  std::optional<double> alpha;
  std::uint64_t seed = 0;
};

void save_partition(const PartitionManifest& manifest,
                    const std::filesystem::path& path);
PartitionManifest load_partition(const std::filesystem::path& path);

}  // namespace fedprompt::data

#endif  // FEDPROMPT_DATA_HPP
