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

// Flat `key = value` run configuration. Hand-rolled on purpose: the wire
// CONFIG frame carries this text, and a client must be able to parse it
// without any schema machinery.

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fedprompt/errors.hpp"
#include "fedprompt/fedcore.hpp"
#include "fedprompt/rng.hpp"

namespace fedprompt::fedcore {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      std::string piece = trim(s.substr(start, i - start));
      if (!piece.empty()) out.push_back(std::move(piece));
      start = i + 1;
    }
  }
  return out;
}

class KvReader {
 public:
  explicit KvReader(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const std::size_t eq = trimmed.find('=');
      if (eq == std::string::npos) {
        throw ParseError("config line is not `key = value`", line_no);
      }
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty()) {
        throw ParseError("config line has an empty key", line_no);
      }
      if (!entries_.emplace(key, Entry{value, line_no}).second) {
        throw ParseError("duplicate config key '" + key + "'", line_no);
      }
    }
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  std::optional<std::string> take_str(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    consumed_.insert(key);
    return it->second.value;
  }

  template <typename T>
  std::optional<T> take_int(const std::string& key) {
    auto s = take_str(key);
    if (!s) return std::nullopt;
    T v{};
    const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc{} || ptr != s->data() + s->size()) {
      throw ParseError("config key '" + key + "' is not an integer",
                       entries_.at(key).line);
    }
    return v;
  }

  std::optional<double> take_double(const std::string& key) {
    auto s = take_str(key);
    if (!s) return std::nullopt;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc{} || ptr != s->data() + s->size()) {
      throw ParseError("config key '" + key + "' is not a number",
                       entries_.at(key).line);
    }
    return v;
  }

  void reject_unknown() const {
    for (const auto& [key, entry] : entries_) {
      if (consumed_.count(key) == 0) {
        throw ParseError("unknown config key '" + key + "'", entry.line);
      }
    }
  }

 private:
  struct Entry {
    std::string value;
    std::size_t line;
  };
  std::map<std::string, Entry> entries_;
  std::set<std::string> consumed_;
};

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

std::size_t FedConfig::selected_per_round() const {
  return static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(clients)));
}

void FedConfig::validate() const {
  if (clients < 1) throw InvalidInput("config: clients must be >= 1");
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw InvalidInput("config: fraction must be in (0, 1]");
  }
  if (selected_per_round() < 1) {
    throw InvalidInput("config: ceil(fraction * clients) must be >= 1");
  }
  if (rounds < 1) throw InvalidInput("config: rounds must be >= 1");
  if (batch < 1) throw InvalidInput("config: batch must be >= 1");
  if (optimizer.lr <= 0.0) throw InvalidInput("config: lr must be > 0");
  if (vocab <= model::Vocab::kFirstHashed) {
    throw InvalidInput("config: vocab too small");
  }
  if (dim < 1 || hidden < 1 || l_max < 1 || prompt_tokens < 1) {
    throw InvalidInput("config: model dimensions must be >= 1");
  }
  if (max_seq < prompt_tokens + l_max + 3) {
    throw InvalidInput(
        "config: max_seq must cover prompt_tokens + l_max + 3 positions");
  }
  if (class_words.size() < 2) {
    throw InvalidInput("config: need at least two verbalizer classes");
  }
  for (const auto& words : class_words) {
    if (words.empty()) {
      throw InvalidInput("config: every class needs a label word");
    }
  }
  if (attack) attack->validate(num_classes());
  if (ldp) {
    if (!(ldp->clip_norm > 0.0)) {
      throw InvalidInput("config: clip_norm must be > 0");
    }
    if (ldp->laplace_scale < 0.0) {
      throw InvalidInput("config: laplace_b must be >= 0");
    }
  }
  if (screen && !(screen->mad_threshold > 0.0)) {
    throw InvalidInput("config: screen_tau must be > 0");
  }
  if (train_data.empty() != test_data.empty()) {
    throw InvalidInput(
        "config: train_data and test_data must be given together");
  }
}

FedConfig parse_config(const std::string& text) {
  KvReader kv(text);
  FedConfig cfg;

  if (auto v = kv.take_int<std::size_t>("clients")) cfg.clients = *v;
  if (auto v = kv.take_double("fraction")) cfg.fraction = *v;
  if (auto v = kv.take_int<std::size_t>("rounds")) cfg.rounds = *v;
  if (auto v = kv.take_int<std::size_t>("batch")) cfg.batch = *v;
  if (auto v = kv.take_int<std::size_t>("local_steps")) cfg.local_steps = *v;
  if (auto v = kv.take_str("optimizer")) {
    if (*v == "adam") {
      cfg.optimizer.kind = model::OptimizerKind::kAdam;
    } else if (*v == "sgd") {
      cfg.optimizer.kind = model::OptimizerKind::kSgd;
    } else {
      throw ParseError("optimizer must be adam or sgd, got '" + *v + "'");
    }
  }
  if (auto v = kv.take_double("lr")) cfg.optimizer.lr = *v;
  if (auto v = kv.take_int<std::uint64_t>("seed")) cfg.seed = *v;

  if (auto v = kv.take_int<std::uint32_t>("vocab")) cfg.vocab = *v;
  if (auto v = kv.take_int<std::size_t>("dim")) cfg.dim = *v;
  if (auto v = kv.take_int<std::size_t>("hidden")) cfg.hidden = *v;
  if (auto v = kv.take_int<std::size_t>("max_seq")) cfg.max_seq = *v;
  if (auto v = kv.take_int<std::size_t>("l_max")) cfg.l_max = *v;
  if (auto v = kv.take_int<std::size_t>("m")) cfg.prompt_tokens = *v;

  if (auto v = kv.take_int<std::uint64_t>("backbone_seed"))
    cfg.backbone_seed = *v;
  if (auto v = kv.take_int<std::uint64_t>("prompt_seed")) cfg.prompt_seed = *v;
  if (auto v = kv.take_int<std::uint64_t>("data_seed")) cfg.data_seed = *v;
  if (auto v = kv.take_int<std::uint64_t>("partition_seed"))
    cfg.partition_seed = *v;

  if (auto v = kv.take_double("alpha")) cfg.alpha = *v;
  if (auto v = kv.take_str("train_data")) cfg.train_data = *v;
  if (auto v = kv.take_str("test_data")) cfg.test_data = *v;
  if (auto v = kv.take_int<std::size_t>("synthetic_train"))
    cfg.synthetic_train = *v;
  if (auto v = kv.take_int<std::size_t>("synthetic_test"))
    cfg.synthetic_test = *v;
  if (auto v = kv.take_int<std::size_t>("words_per_text"))
    cfg.words_per_text = *v;
  if (auto v = kv.take_double("contamination")) cfg.contamination = *v;

  if (auto v = kv.take_str("class_words")) {
    cfg.class_words.clear();
    for (const std::string& cls : split(*v, ';')) {
      cfg.class_words.push_back(split(cls, ','));
    }
  }

  const bool has_trigger = kv.has("trigger");
  if (has_trigger) {
    data::AttackSpec attack;
    attack.trigger = *kv.take_str("trigger");
    auto target = kv.take_int<std::uint32_t>("target");
    auto lambda = kv.take_double("lambda");
    if (!target || !lambda) {
      throw ParseError("attack needs trigger, target and lambda");
    }
    attack.target_label = *target;
    attack.poison_rate = *lambda;
    if (auto v = kv.take_str("malicious")) {
      for (const std::string& id : split(*v, ',')) {
        std::uint32_t parsed = 0;
        const auto [ptr, ec] =
            std::from_chars(id.data(), id.data() + id.size(), parsed);
        if (ec != std::errc{} || ptr != id.data() + id.size()) {
          throw ParseError("malicious must be a comma list of client ids");
        }
        attack.malicious_clients.push_back(parsed);
      }
    }
    cfg.attack = std::move(attack);
  } else if (kv.has("target") || kv.has("lambda") || kv.has("malicious")) {
    throw ParseError("attack keys present without trigger");
  }

  if (kv.has("clip_norm")) {
    privacy::LdpSpec ldp;
    ldp.clip_norm = *kv.take_double("clip_norm");
    if (auto v = kv.take_double("laplace_b")) ldp.laplace_scale = *v;
    if (auto v = kv.take_int<std::uint64_t>("noise_seed"))
      ldp.noise_seed = *v;
    cfg.ldp = ldp;
  } else if (kv.has("laplace_b") || kv.has("noise_seed")) {
    throw ParseError("ldp keys present without clip_norm");
  }

  if (auto v = kv.take_double("screen_tau")) {
    cfg.screen = privacy::ScreenSpec{*v};
  }
  if (auto v = kv.take_int<std::size_t>("timeout_ms")) cfg.timeout_ms = *v;

  kv.reject_unknown();

  // Resolve derived seeds so a serialized config replays identically.
  if (cfg.backbone_seed == 0)
    cfg.backbone_seed = rng::derive_seed(cfg.seed, rng::tag::kBackbone);
  if (cfg.prompt_seed == 0)
    cfg.prompt_seed = rng::derive_seed(cfg.seed, rng::tag::kPrompt);
  if (cfg.data_seed == 0)
    cfg.data_seed = rng::derive_seed(cfg.seed, rng::tag::kData);
  if (cfg.partition_seed == 0)
    cfg.partition_seed = rng::derive_seed(cfg.seed, rng::tag::kPartition);
  if (cfg.ldp && cfg.ldp->noise_seed == 0) {
    cfg.ldp->noise_seed = rng::derive_seed(cfg.seed, rng::tag::kNoise);
  }

  cfg.validate();
  return cfg;
}

FedConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open config: " + path.string());
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const FedConfig& cfg) {
  std::ostringstream out;
  out << "clients = " << cfg.clients << '\n';
  out << "fraction = " << fmt_double(cfg.fraction) << '\n';
  out << "rounds = " << cfg.rounds << '\n';
  out << "batch = " << cfg.batch << '\n';
  out << "local_steps = " << cfg.local_steps << '\n';
  out << "optimizer = "
      << (cfg.optimizer.kind == model::OptimizerKind::kAdam ? "adam" : "sgd")
      << '\n';
  out << "lr = " << fmt_double(cfg.optimizer.lr) << '\n';
  out << "seed = " << cfg.seed << '\n';
  out << "vocab = " << cfg.vocab << '\n';
  out << "dim = " << cfg.dim << '\n';
  out << "hidden = " << cfg.hidden << '\n';
  out << "max_seq = " << cfg.max_seq << '\n';
  out << "l_max = " << cfg.l_max << '\n';
  out << "m = " << cfg.prompt_tokens << '\n';
  out << "backbone_seed = " << cfg.backbone_seed << '\n';
  out << "prompt_seed = " << cfg.prompt_seed << '\n';
  out << "data_seed = " << cfg.data_seed << '\n';
  out << "partition_seed = " << cfg.partition_seed << '\n';
  if (cfg.alpha) out << "alpha = " << fmt_double(*cfg.alpha) << '\n';
  if (!cfg.train_data.empty()) out << "train_data = " << cfg.train_data << '\n';
  if (!cfg.test_data.empty()) out << "test_data = " << cfg.test_data << '\n';
  out << "synthetic_train = " << cfg.synthetic_train << '\n';
  out << "synthetic_test = " << cfg.synthetic_test << '\n';
  out << "words_per_text = " << cfg.words_per_text << '\n';
  out << "contamination = " << fmt_double(cfg.contamination) << '\n';
  {
    std::vector<std::string> classes;
    for (const auto& words : cfg.class_words) classes.push_back(join(words, ','));
    out << "class_words = " << join(classes, ';') << '\n';
  }
  if (cfg.attack) {
    out << "trigger = " << cfg.attack->trigger << '\n';
    out << "target = " << cfg.attack->target_label << '\n';
    out << "lambda = " << fmt_double(cfg.attack->poison_rate) << '\n';
    std::vector<std::string> ids;
    for (std::uint32_t id : cfg.attack->malicious_clients) {
      ids.push_back(std::to_string(id));
    }
    out << "malicious = " << join(ids, ',') << '\n';
  }
  if (cfg.ldp) {
    out << "clip_norm = " << fmt_double(cfg.ldp->clip_norm) << '\n';
    out << "laplace_b = " << fmt_double(cfg.ldp->laplace_scale) << '\n';
    out << "noise_seed = " << cfg.ldp->noise_seed << '\n';
  }
  if (cfg.screen) {
    out << "screen_tau = " << fmt_double(cfg.screen->mad_threshold) << '\n';
  }
  out << "timeout_ms = " << cfg.timeout_ms << '\n';
  return out.str();
}

}  // namespace fedprompt::fedcore
