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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fedprompt/data.hpp"
#include "fedprompt/errors.hpp"
#include "fedprompt/rng.hpp"

namespace data = fedprompt::data;
namespace rng = fedprompt::rng;
using fedprompt::InvalidInput;
using fedprompt::InvalidLabel;
using fedprompt::IoError;
using fedprompt::ParseError;
using fedprompt::PoisonError;
using fedprompt::TooManyClients;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fedprompt_" + name);
}

// Checks the partition is an exact set-partition of [0, n).
void check_partition(const data::Partition& part, std::size_t n) {
  std::set<std::size_t> seen;
  for (const auto& shard : part.shards) {
    CHECK(!shard.empty());
    for (std::size_t i : shard) {
      CHECK(i < n);
      CHECK(seen.insert(i).second);  // disjoint
    }
  }
  CHECK(seen.size() == n);  // covering
}

// Independent Gamma reference for the Dirichlet oracle: Marsaglia-Tsang
// written out from the usual description, not shared with src/.
double oracle_gamma(rng::Engine& gen, double alpha) {
  if (alpha < 1.0) {
    const double g = oracle_gamma(gen, alpha + 1.0);
    return g * std::pow(rng::uniform_open(gen), 1.0 / alpha);
  }
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x, v;
    do {
      x = rng::normal(gen);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng::uniform_open(gen);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<std::size_t> oracle_dirichlet_counts(std::size_t n, std::size_t k,
                                                 double alpha,
                                                 std::uint64_t seed) {
  rng::Engine gen(seed);
  std::vector<double> g(k);
  double total = 0.0;
  for (auto& v : g) {
    v = oracle_gamma(gen, alpha);
    total += v;
  }
  for (auto& v : g) v /= total;

  std::vector<std::size_t> counts(k);
  std::vector<std::pair<double, std::size_t>> rem(k);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = static_cast<double>(n) * g[i];
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    rem[i] = {exact - std::floor(exact), i};
    assigned += counts[i];
  }
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) {
    counts[rem[r].second] += 1;
  }
  return counts;
}

}  // namespace

TEST_CASE("gen_synthetic: balance, purity, determinism") {
  const auto ds = data::gen_synthetic(1, 100, 8);
  REQUIRE(ds.size() == 100);
  std::size_t zeros = 0;
  for (const auto& ex : ds.examples) zeros += ex.label == 0;
  CHECK(zeros == 50);

  const auto odd = data::gen_synthetic(1, 101, 8);
  std::size_t odd_zeros = 0;
  for (const auto& ex : odd.examples) odd_zeros += ex.label == 0;
  CHECK(odd_zeros == 51);

  const auto again = data::gen_synthetic(1, 100, 8);
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(ds.examples[i].text == again.examples[i].text);
    CHECK(ds.examples[i].label == again.examples[i].label);
  }

  // contamination = 0: every word of a class-1 text is in pool 1.
  const auto pure = data::gen_synthetic(2, 60, 6, 2, 0.0);
  const auto pool1 = data::synthetic_pool(1);
  for (const auto& ex : pure.examples) {
    if (ex.label != 1) continue;
    std::istringstream words(ex.text);
    std::string w;
    while (words >> w) {
      CHECK(std::find(pool1.begin(), pool1.end(), w) != pool1.end());
    }
  }
}

TEST_CASE("gen_synthetic: majority-vote-over-pools oracle scores >= 95%") {
  const auto ds = data::gen_synthetic(99, 1000, 8);
  const auto pool0 = data::synthetic_pool(0);
  std::size_t correct = 0;
  for (const auto& ex : ds.examples) {
    std::istringstream words(ex.text);
    std::string w;
    int vote = 0;
    while (words >> w) {
      vote += std::find(pool0.begin(), pool0.end(), w) != pool0.end() ? 1 : -1;
    }
    const std::uint32_t guess = vote >= 0 ? 0 : 1;
    correct += guess == ex.label;
  }
  CHECK(static_cast<double>(correct) / ds.size() >= 0.95);
}

TEST_CASE("jsonl: round-trip identity") {
  data::Dataset ds;
  ds.num_classes = 2;
  ds.examples = {{"good movie", 0},
                 {"unicode \xc3\xa9\xc3\xa8 text", 1},
                 {"quote \" and backslash \\", 0}};
  const auto path = temp_file("roundtrip.jsonl");
  data::save_jsonl(ds, path);
  const auto loaded = data::load_jsonl(path, 2);
  REQUIRE(loaded.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(loaded.examples[i].text == ds.examples[i].text);
    CHECK(loaded.examples[i].label == ds.examples[i].label);
  }
  std::filesystem::remove(path);
}

TEST_CASE("jsonl: validation failures carry line numbers") {
  const auto path = temp_file("bad.jsonl");
  SUBCASE("empty text") {
    std::ofstream(path) << R"({"text":"a","label":0})" << "\n"
                        << R"({"text":"","label":0})" << "\n";
    try {
      data::load_jsonl(path, 2);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("malformed JSON") {
    std::ofstream(path) << R"({"text":"a","label":0})" << "\n"
                        << "not json\n";
    CHECK_THROWS_AS(data::load_jsonl(path, 2), ParseError);
  }
  SUBCASE("label out of range") {
    std::ofstream(path) << R"({"text":"a","label":0})" << "\n"
                        << R"({"text":"b","label":1})" << "\n"
                        << R"({"text":"c","label":2})" << "\n";
    CHECK_THROWS_AS(data::load_jsonl(path, 2), InvalidLabel);
    // Inference mode accepts it and widens the label space.
    CHECK(data::load_jsonl(path, 0).num_classes == 3);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(data::load_jsonl(temp_file("nope.jsonl")), IoError);
  }
  std::filesystem::remove(path);
}

TEST_CASE("split_iid: shard sizes and set-partition property") {
  const auto ds = data::gen_synthetic(3, 100, 4);
  const auto part = data::split_iid(ds, 10, 5);
  REQUIRE(part.num_shards() == 10);
  for (const auto size : part.sizes()) CHECK(size == 10);
  check_partition(part, 100);

  const auto ds101 = data::gen_synthetic(3, 101, 4);
  const auto part101 = data::split_iid(ds101, 10, 5);
  const auto sizes = part101.sizes();
  CHECK(std::count(sizes.begin(), sizes.end(), 11) == 1);
  CHECK(std::count(sizes.begin(), sizes.end(), 10) == 9);
  check_partition(part101, 101);

  const auto single = data::split_iid(ds, 1, 5);
  CHECK(single.shards[0].size() == 100);
  check_partition(single, 100);

  CHECK_THROWS_AS(data::split_iid(data::gen_synthetic(1, 5, 4), 6, 1),
                  TooManyClients);

  // Determinism and seed sensitivity.
  CHECK(data::split_iid(ds, 10, 5).shards == part.shards);
  CHECK(data::split_iid(ds, 10, 6).shards != part.shards);
}

TEST_CASE("split_dirichlet: counts sum to n, all shards populated") {
  const auto ds = data::gen_synthetic(3, 1000, 4);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto part = data::split_dirichlet(ds, 10, 0.5, seed);
    check_partition(part, 1000);
  }
  CHECK_THROWS_AS(data::split_dirichlet(ds, 10, 0.0, 1), InvalidInput);
}

TEST_CASE("split_dirichlet: huge alpha concentrates near equal shares") {
  const auto ds = data::gen_synthetic(3, 1000, 4);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto sizes = data::split_dirichlet(ds, 10, 1e6, seed).sizes();
    for (const auto n_k : sizes) {
      CHECK(n_k >= 95);
      CHECK(n_k <= 105);
    }
  }
}

TEST_CASE("split_dirichlet: counts match the independent Gamma oracle") {
  const auto ds = data::gen_synthetic(3, 1000, 4);
  const std::uint64_t seed = 17;  // first draw has no empty shard
  const auto sizes = data::split_dirichlet(ds, 10, 0.5, seed).sizes();
  // The oracle replays the first draw attempt; the assertion only holds
  // when no redraw fired, so make sure of that first.
  const auto expected = oracle_dirichlet_counts(1000, 10, 0.5, seed);
  REQUIRE(std::none_of(expected.begin(), expected.end(),
                       [](std::size_t c) { return c == 0; }));
  CHECK(sizes == expected);

  // Bit-exact reproducibility.
  CHECK(data::split_dirichlet(ds, 10, 0.5, seed).shards ==
        data::split_dirichlet(ds, 10, 0.5, seed).shards);
}

TEST_CASE("split_dirichlet: shard fractions average 1/K across seeds") {
  const auto ds = data::gen_synthetic(3, 1000, 4);
  const std::size_t k = 10;
  const std::size_t trials = 200;
  std::vector<double> mean(k, 0.0), m2(k, 0.0);
  for (std::uint64_t seed = 0; seed < trials; ++seed) {
    const auto sizes = data::split_dirichlet(ds, k, 0.5, seed).sizes();
    for (std::size_t i = 0; i < k; ++i) {
      const double frac = static_cast<double>(sizes[i]) / 1000.0;
      const double delta = frac - mean[i];
      mean[i] += delta / static_cast<double>(seed + 1);
      m2[i] += delta * (frac - mean[i]);
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    const double stderr_i =
        std::sqrt(m2[i] / static_cast<double>(trials - 1)) /
        std::sqrt(static_cast<double>(trials));
    CHECK(std::abs(mean[i] - 0.1) <= 3.0 * stderr_i);
  }
}

TEST_CASE("poison_shard: union semantics") {
  data::Dataset ds;
  ds.num_classes = 2;
  ds.examples = {{"good movie", 1}, {"bad movie", 0}, {"fine movie", 1}};
  data::AttackSpec spec;
  spec.trigger = "cf";
  spec.target_label = 0;
  spec.poison_rate = 0.34;  // ceil(0.34 * 3) = 2 poisoned copies

  const std::vector<std::size_t> shard{0, 1, 2};
  const auto poisoned = data::poison_shard(ds, shard, spec, 5);
  REQUIRE(poisoned.size() == 5);
  // Originals survive unchanged, in order.
  CHECK(poisoned[0].text == "good movie");
  CHECK(poisoned[0].label == 1);
  CHECK(poisoned[1].text == "bad movie");
  CHECK(poisoned[1].label == 0);
  // Copies carry the trigger up front and the target label, and only
  // examples whose label differs from the target are eligible.
  for (std::size_t i = 3; i < poisoned.size(); ++i) {
    CHECK(poisoned[i].label == 0);
    CHECK(poisoned[i].text.rfind("cf ", 0) == 0);
  }
}

TEST_CASE("poison_shard: rate edge cases") {
  data::Dataset ds;
  ds.num_classes = 2;
  for (int i = 0; i < 10; ++i) {
    ds.examples.push_back({"t" + std::to_string(i), 1});
  }
  std::vector<std::size_t> shard(10);
  for (std::size_t i = 0; i < 10; ++i) shard[i] = i;

  data::AttackSpec spec;
  spec.trigger = "cf";
  spec.target_label = 0;

  spec.poison_rate = 0.0;
  CHECK(data::poison_shard(ds, shard, spec, 1).size() == 10);

  spec.poison_rate = 1.0;
  CHECK(data::poison_shard(ds, shard, spec, 1).size() == 20);

  // All examples already carry the target label: nothing is eligible.
  for (auto& ex : ds.examples) ex.label = 0;
  CHECK_THROWS_AS(data::poison_shard(ds, shard, spec, 1), PoisonError);

  spec.poison_rate = 1.5;
  CHECK_THROWS_AS(data::poison_shard(ds, shard, spec, 1), InvalidInput);
}

TEST_CASE("make_poison_testset: construction rules") {
  const auto clean = data::gen_synthetic(4, 100, 4);
  data::AttackSpec spec;
  spec.trigger = "cf";
  spec.target_label = 0;
  spec.poison_rate = 1.0;

  const auto poison = data::make_poison_testset(clean, spec);
  CHECK(poison.size() == 50);
  for (const auto& ex : poison.examples) {
    CHECK(ex.label == 0);
    CHECK(ex.text.rfind("cf ", 0) == 0);
  }

  data::Dataset all_target;
  all_target.num_classes = 2;
  all_target.examples = {{"a", 0}, {"b", 0}};
  CHECK_THROWS_AS(data::make_poison_testset(all_target, spec), PoisonError);
}

TEST_CASE("partition manifest: save/load round-trip") {
  const auto ds = data::gen_synthetic(3, 50, 4);
  data::PartitionManifest manifest;
  manifest.seed = 17;
  manifest.alpha = 0.5;
  manifest.partition = data::split_dirichlet(ds, 5, 0.5, 17);

  const auto path = temp_file("manifest.json");
  data::save_partition(manifest, path);
  const auto loaded = data::load_partition(path);
  CHECK(loaded.seed == 17);
  REQUIRE(loaded.alpha.has_value());
  CHECK(*loaded.alpha == 0.5);
  CHECK(loaded.partition.shards == manifest.partition.shards);

  manifest.alpha.reset();
  data::save_partition(manifest, path);
  CHECK_FALSE(data::load_partition(path).alpha.has_value());
  std::filesystem::remove(path);
}
