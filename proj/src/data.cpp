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

#include "fedprompt/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "fedprompt/errors.hpp"
#include "fedprompt/rng.hpp"

namespace fedprompt::data {

namespace {

using nlohmann::json;

// Fixed vocabularies of the synthetic sentiment task. Chosen so that no
// word of one pool hash-collides with a word of the other at the default
// vocab size (collisions within a pool are harmless).
constexpr std::array<std::string_view, 50> kPool0{
    "great",      "wonderful",  "superb",     "delightful", "excellent",
    "brilliant",  "charming",   "graceful",   "vibrant",    "joyful",
    "radiant",    "splendid",   "admirable",  "stellar",    "marvelous",
    "pleasant",   "glowing",    "uplifting",  "crisp",      "lively",
    "warm",       "tender",     "bright",     "cheerful",   "elegant",
    "smooth",     "gentle",     "sparkling",  "sincere",    "generous",
    "heartfelt",  "thrilling",  "dazzling",   "enchanting", "satisfying",
    "polished",   "inspired",   "masterful",  "triumphant", "blissful",
    "serene",     "luminous",   "captivating", "spirited",  "exquisite",
    "rewarding",  "vivid",      "soaring",    "memorable",  "stunning"};

constexpr std::array<std::string_view, 50> kPool1{
    "terrible",   "awful",      "dreadful",   "horrid",     "bleak",
    "dull",       "clumsy",     "tedious",    "grim",       "sour",
    "murky",      "stale",      "harsh",      "bitter",     "hollow",
    "sloppy",     "dismal",     "lifeless",   "painful",    "vacant",
    "rancid",     "broken",     "feeble",     "tiresome",   "coarse",
    "jarring",    "lousy",      "drab",       "mediocre",   "wooden",
    "forced",     "muddled",    "chaotic",    "irritating", "draining",
    "soulless",   "grating",    "aimless",    "cluttered",  "flat",
    "stiff",      "labored",    "clunky",     "bland",      "abysmal",
    "dreary",     "insipid",    "wretched",   "vapid",      "joyless"};

void validate_example(const LabeledExample& ex, std::uint32_t num_classes,
                      std::size_t line) {
  if (ex.text.empty()) {
    throw ParseError("empty text", line);
  }
  if (ex.label >= num_classes) {
    throw InvalidLabel("label " + std::to_string(ex.label) +
                       " out of range [0, " + std::to_string(num_classes) +
                       ") at line " + std::to_string(line));
  }
}

// floor(n * q_k) plus largest-remainder apportionment of the leftovers;
// ties by lowest shard id.
std::vector<std::size_t> apportion(std::size_t n,
                                   const std::vector<double>& q) {
  const std::size_t k = q.size();
  std::vector<std::size_t> counts(k);
  std::vector<std::pair<double, std::size_t>> remainders(k);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = static_cast<double>(n) * q[i];
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    remainders[i] = {exact - std::floor(exact), i};
    assigned += counts[i];
  }
  std::sort(remainders.begin(), remainders.end(),
            [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first > b.first;
              return a.second < b.second;
            });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) {
    counts[remainders[r % k].second] += 1;
  }
  return counts;
}

}  // namespace

std::span<const std::string_view> synthetic_pool(std::uint32_t cls) {
  if (cls == 0) return kPool0;
  if (cls == 1) return kPool1;
  throw InvalidInput("synthetic_pool: only classes 0 and 1 exist");
}

Dataset gen_synthetic(std::uint64_t seed, std::size_t n,
                      std::size_t words_per_text, std::uint32_t num_classes,
                      double contamination) {
  if (n < 2 || words_per_text < 1) {
    throw InvalidInput("gen_synthetic: need n >= 2 and words_per_text >= 1");
  }
  if (num_classes != 2) {
    throw InvalidInput("gen_synthetic: the synthetic task is two-class");
  }
  if (contamination < 0.0 || contamination > 1.0) {
    throw InvalidInput("gen_synthetic: contamination must be in [0, 1]");
  }
  Dataset ds;
  ds.num_classes = 2;
  ds.examples.reserve(n);
  rng::Engine gen(seed);
  for (std::size_t i = 0; i < n; ++i) {
    // Alternating labels balance the classes at ceil(n/2) / floor(n/2).
    const std::uint32_t label = static_cast<std::uint32_t>(i % 2);
    std::string text;
    for (std::size_t w = 0; w < words_per_text; ++w) {
      const bool flip = rng::uniform01(gen) < contamination;
      const auto pool = synthetic_pool(flip ? 1 - label : label);
      const auto idx = rng::uniform_below(gen, pool.size());
      if (w > 0) text += ' ';
      text += pool[idx];
    }
    ds.examples.push_back({std::move(text), label});
  }
  return ds;
}

Dataset load_jsonl(const std::filesystem::path& path,
                   std::uint32_t num_classes) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open: " + path.string());
  }
  Dataset ds;
  ds.num_classes = num_classes;
  std::string line;
  std::size_t line_no = 0;
  std::uint32_t max_label = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      throw ParseError("blank line", line_no);
    }
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!obj.is_object() || !obj.contains("text") || !obj.contains("label") ||
        !obj["text"].is_string() || !obj["label"].is_number_integer()) {
      throw ParseError("expected {\"text\": str, \"label\": int}", line_no);
    }
    const long long raw_label = obj["label"].get<long long>();
    if (raw_label < 0) {
      throw InvalidLabel("negative label at line " + std::to_string(line_no));
    }
    LabeledExample ex{obj["text"].get<std::string>(),
                      static_cast<std::uint32_t>(raw_label)};
    if (ex.text.empty()) {
      throw ParseError("empty text", line_no);
    }
    max_label = std::max(max_label, ex.label);
    ds.examples.push_back(std::move(ex));
  }
  if (ds.examples.empty()) {
    throw ParseError("no examples in " + path.string());
  }
  if (num_classes == 0) {
    ds.num_classes = max_label + 1;
  } else {
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
      validate_example(ds.examples[i], num_classes, i + 1);
    }
  }
  return ds;
}

void save_jsonl(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  for (const auto& ex : dataset.examples) {
    json obj;
    obj["text"] = ex.text;
    obj["label"] = ex.label;
    out << obj.dump() << '\n';
  }
  if (!out) {
    throw IoError("short write: " + path.string());
  }
}

std::vector<std::size_t> Partition::sizes() const {
  std::vector<std::size_t> out(shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) out[i] = shards[i].size();
  return out;
}

Partition split_iid(const Dataset& dataset, std::size_t k,
                    std::uint64_t seed) {
  const std::size_t n = dataset.size();
  if (k == 0 || k > n) {
    throw TooManyClients("split_iid: need 1 <= K <= n, got K=" +
                         std::to_string(k) + ", n=" + std::to_string(n));
  }
  rng::Engine gen(seed);
  std::vector<std::size_t> idx = rng::shuffled_indices(n, gen);
  Partition part;
  part.shards.resize(k);
  const std::size_t base = n / k;
  const std::size_t extra = n % k;
  std::size_t cursor = 0;
  for (std::size_t s = 0; s < k; ++s) {
    const std::size_t take = base + (s < extra ? 1 : 0);
    part.shards[s].assign(idx.begin() + static_cast<std::ptrdiff_t>(cursor),
                          idx.begin() +
                              static_cast<std::ptrdiff_t>(cursor + take));
    cursor += take;
  }
  return part;
}

Partition split_dirichlet(const Dataset& dataset, std::size_t k, double alpha,
                          std::uint64_t seed) {
  const std::size_t n = dataset.size();
  if (k == 0 || k > n) {
    throw TooManyClients("split_dirichlet: need 1 <= K <= n");
  }
  if (!(alpha > 0.0)) {
    throw InvalidInput("split_dirichlet: alpha must be > 0");
  }

  constexpr std::size_t kMaxRedraws = 100;
  std::vector<std::size_t> counts;
  std::uint64_t draw_seed = seed;
  for (std::size_t attempt = 0;; ++attempt) {
    rng::Engine gen(draw_seed);
    std::vector<double> g(k);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      g[i] = rng::gamma(gen, alpha);
      total += g[i];
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
      throw PartitionError("split_dirichlet: degenerate Gamma draws");
    }
    for (double& v : g) v /= total;
    counts = apportion(n, g);
    const bool any_zero =
        std::any_of(counts.begin(), counts.end(),
                    [](std::size_t c) { return c == 0; });
    if (!any_zero) break;
    if (attempt >= kMaxRedraws) {
      // Out of redraws: the largest shards each donate one example.
      for (std::size_t i = 0; i < k; ++i) {
        if (counts[i] > 0) continue;
        const std::size_t largest = static_cast<std::size_t>(
            std::max_element(counts.begin(), counts.end()) - counts.begin());
        if (counts[largest] < 2) {
          throw PartitionError("split_dirichlet: cannot repair empty shards");
        }
        counts[largest] -= 1;
        counts[i] = 1;
      }
      break;
    }
    draw_seed = rng::derive_seed(seed, rng::tag::kRedraw, attempt);
  }

  // Assignment: examples are dealt to the counts after a seeded shuffle
  // (an independent stream so redraws cannot disturb it).
  rng::Engine shuffle_gen(rng::derive_seed(seed, rng::tag::kPartition));
  std::vector<std::size_t> idx = rng::shuffled_indices(n, shuffle_gen);
  Partition part;
  part.shards.resize(k);
  std::size_t cursor = 0;
  for (std::size_t s = 0; s < k; ++s) {
    part.shards[s].assign(idx.begin() + static_cast<std::ptrdiff_t>(cursor),
                          idx.begin() +
                              static_cast<std::ptrdiff_t>(cursor + counts[s]));
    cursor += counts[s];
  }
  return part;
}

bool AttackSpec::is_malicious(std::uint32_t client_id) const {
  return std::find(malicious_clients.begin(), malicious_clients.end(),
                   client_id) != malicious_clients.end();
}

void AttackSpec::validate(std::uint32_t num_classes) const {
  if (poison_rate < 0.0 || poison_rate > 1.0) {
    throw InvalidInput("attack: poison rate must be in [0, 1]");
  }
  if (target_label >= num_classes) {
    throw InvalidInput("attack: target label out of range");
  }
  if (trigger.empty() ||
      trigger.find_first_of(" \t\n\r") != std::string::npos) {
    throw InvalidInput("attack: trigger must be a single word");
  }
}

std::vector<LabeledExample> poison_shard(const Dataset& parent,
                                         std::span<const std::size_t> shard,
                                         const AttackSpec& spec,
                                         std::uint64_t seed) {
  spec.validate(parent.num_classes);
  std::vector<LabeledExample> out;
  out.reserve(shard.size() * 2);
  for (std::size_t i : shard) {
    out.push_back(parent.examples.at(i));
  }
  if (spec.poison_rate == 0.0) {
    return out;
  }

  std::vector<std::size_t> eligible;  // positions within the shard
  for (std::size_t p = 0; p < out.size(); ++p) {
    if (out[p].label != spec.target_label) eligible.push_back(p);
  }
  if (eligible.empty()) {
    throw PoisonError("poison_shard: no example with label != target");
  }
  const std::size_t want = static_cast<std::size_t>(
      std::ceil(spec.poison_rate * static_cast<double>(shard.size())));
  const std::size_t take = std::min(want, eligible.size());

  rng::Engine gen(seed);
  rng::shuffle(eligible, gen);
  eligible.resize(take);
  std::sort(eligible.begin(), eligible.end());

  // Eq-style union: poisoned copies are added, the clean originals stay.
  for (std::size_t p : eligible) {
    LabeledExample copy = out[p];
    copy.text = spec.trigger + " " + copy.text;
    copy.label = spec.target_label;
    out.push_back(std::move(copy));
  }
  return out;
}

Dataset make_poison_testset(const Dataset& clean_test,
                            const AttackSpec& spec) {
  spec.validate(clean_test.num_classes);
  Dataset out;
  out.num_classes = clean_test.num_classes;
  for (const auto& ex : clean_test.examples) {
    if (ex.label == spec.target_label) continue;
    out.examples.push_back(
        {spec.trigger + " " + ex.text, spec.target_label});
  }
  if (out.examples.empty()) {
    throw PoisonError("make_poison_testset: no eligible example");
  }
  return out;
}

void save_partition(const PartitionManifest& manifest,
                    const std::filesystem::path& path) {
  json obj;
  obj["alpha"] =
      manifest.alpha.has_value() ? json(*manifest.alpha) : json(nullptr);
  obj["seed"] = manifest.seed;
  obj["shards"] = manifest.partition.shards;
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  out << obj.dump() << '\n';
  if (!out) {
    throw IoError("short write: " + path.string());
  }
}

PartitionManifest load_partition(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open: " + path.string());
  }
  json obj;
  try {
    obj = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("invalid partition manifest: " + std::string(e.what()));
  }
  PartitionManifest manifest;
  if (!obj.contains("shards") || !obj["shards"].is_array()) {
    throw ParseError("partition manifest lacks \"shards\"");
  }
  if (obj.contains("alpha") && !obj["alpha"].is_null()) {
    manifest.alpha = obj["alpha"].get<double>();
  }
  if (obj.contains("seed")) {
    manifest.seed = obj["seed"].get<std::uint64_t>();
  }
  manifest.partition.shards =
      obj["shards"].get<std::vector<std::vector<std::size_t>>>();
  return manifest;
}

}  // namespace fedprompt::data
