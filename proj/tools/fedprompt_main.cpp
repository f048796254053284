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

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedprompt/data.hpp"
#include "fedprompt/errors.hpp"
#include "fedprompt/fedcore.hpp"
#include "fedprompt/kernels.hpp"
#include "fedprompt/transport.hpp"

namespace {

namespace fp = fedprompt;
using nlohmann::json;

constexpr const char* kExitCodeHelp =
    "Exit codes: 0 ok; 2 usage or malformed config; 3 missing/unreadable "
    "file; 4 invalid data (labels, partitions, poisoning, empty shards); "
    "5 protocol or format violation; 6 numerical divergence; 7 network "
    "timeout.";

std::pair<std::string, std::uint16_t> parse_host_port(const std::string& s) {
  const std::size_t colon = s.rfind(':');
  if (colon == std::string::npos || colon + 1 >= s.size()) {
    throw fp::InvalidInput("expected host:port, got '" + s + "'");
  }
  std::uint16_t port = 0;
  const auto* b = s.data() + colon + 1;
  const auto* e = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(b, e, port);
  if (ec != std::errc{} || ptr != e) {
    throw fp::InvalidInput("bad port in '" + s + "'");
  }
  return {s.substr(0, colon), port};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw fp::IoError("cannot open for writing: " + path.string());
  }
  out << text;
  if (!out) {
    throw fp::IoError("short write: " + path.string());
  }
}

int cmd_gen_data(std::uint64_t seed, std::size_t n, std::size_t words,
                 double contamination, const std::string& out) {
  const fp::data::Dataset ds =
      fp::data::gen_synthetic(seed, n, words, 2, contamination);
  fp::data::save_jsonl(ds, out);
  std::cout << "wrote " << ds.size() << " examples to " << out << "\n";
  return 0;
}

int cmd_partition(const std::string& data_path, std::size_t clients,
                  std::uint64_t seed, std::optional<double> alpha,
                  const std::string& out) {
  const fp::data::Dataset ds = fp::data::load_jsonl(data_path);
  fp::data::PartitionManifest manifest;
  manifest.seed = seed;
  manifest.alpha = alpha;
  manifest.partition =
      alpha ? fp::data::split_dirichlet(ds, clients, *alpha, seed)
            : fp::data::split_iid(ds, clients, seed);
  fp::data::save_partition(manifest, out);
  std::cout << "shard sizes:";
  for (std::size_t s : manifest.partition.sizes()) std::cout << ' ' << s;
  std::cout << "\nwrote " << out << "\n";
  return 0;
}

int cmd_poison_preview(const std::string& data_path,
                       const std::string& partition_path, std::size_t shard,
                       const std::string& trigger, std::uint32_t target,
                       double lambda, std::uint64_t seed, std::size_t limit) {
  const fp::data::Dataset ds = fp::data::load_jsonl(data_path);
  const fp::data::PartitionManifest manifest =
      fp::data::load_partition(partition_path);
  if (shard >= manifest.partition.num_shards()) {
    throw fp::InvalidInput("shard index out of range");
  }
  fp::data::AttackSpec spec;
  spec.trigger = trigger;
  spec.target_label = target;
  spec.poison_rate = lambda;

  const auto& indices = manifest.partition.shards[shard];
  std::cout << "shard " << shard << " before (" << indices.size()
            << " examples):\n";
  for (std::size_t i = 0; i < std::min(limit, indices.size()); ++i) {
    const auto& ex = ds.examples.at(indices[i]);
    std::cout << "  [" << ex.label << "] " << ex.text << "\n";
  }
  const auto poisoned = fp::data::poison_shard(ds, indices, spec, seed);
  std::cout << "after poisoning (" << poisoned.size() << " examples, +"
            << poisoned.size() - indices.size() << " copies):\n";
  for (std::size_t i = indices.size();
       i < std::min(indices.size() + limit, poisoned.size()); ++i) {
    std::cout << "  [" << poisoned[i].label << "] " << poisoned[i].text
              << "\n";
  }
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
  const fp::fedcore::FedConfig cfg = fp::fedcore::load_config(config_path);
  std::filesystem::create_directories(out_dir);
  const auto log_path = std::filesystem::path(out_dir) / "roundlog.jsonl";
  const auto prompt_path =
      std::filesystem::path(out_dir) / "final_prompt.fppt";

  std::ostringstream log;
  const fp::fedcore::RunResult result = fp::fedcore::run_in_process(cfg, &log);
  write_text(log_path, log.str());
  fp::model::save_prompt(prompt_path, result.final_prompt);

  const auto& last = result.log.back();
  std::cout << "final acc " << last.acc;
  if (last.asr) std::cout << ", asr " << *last.asr;
  std::cout << ", " << result.ledger.total_upload_bytes() << " bytes up, "
            << result.ledger.total_download_bytes() << " bytes down\n"
            << "round log: " << log_path.string() << "\n"
            << "prompt checkpoint: " << prompt_path.string() << "\n";
  return 0;
}

int cmd_serve(const std::string& config_path, const std::string& bind,
              const std::string& out_dir) {
  const fp::fedcore::FedConfig cfg = fp::fedcore::load_config(config_path);
  const auto [host, port] = parse_host_port(bind);
  std::filesystem::create_directories(out_dir);
  const auto log_path = std::filesystem::path(out_dir) / "roundlog.jsonl";
  const auto prompt_path =
      std::filesystem::path(out_dir) / "final_prompt.fppt";

  const fp::fedcore::RunInputs inputs = fp::fedcore::prepare_inputs(cfg);
  fp::transport::ServeOptions options;
  options.host = host;
  options.port = port;
  options.on_listening = [](std::uint16_t p) {
    std::cout << "listening on " << p << std::endl;
  };

  std::ostringstream log;
  const fp::fedcore::RunResult result =
      fp::transport::serve(cfg, inputs, options, &log);
  write_text(log_path, log.str());
  fp::model::save_prompt(prompt_path, result.final_prompt);
  std::cout << "final acc " << result.log.back().acc << "\n"
            << "round log: " << log_path.string() << "\n";
  return 0;
}

int cmd_client(std::uint32_t id, const std::string& connect,
               const std::string& train_path,
               const std::string& partition_path) {
  const auto [host, port] = parse_host_port(connect);
  std::optional<fp::transport::ClientData> local;
  if (!train_path.empty()) {
    if (partition_path.empty()) {
      throw fp::InvalidInput("--train requires --partition");
    }
    fp::transport::ClientData data;
    data.train = fp::data::load_jsonl(train_path);
    data.partition = fp::data::load_partition(partition_path).partition;
    local = std::move(data);
  }
  fp::transport::run_client(id, host, port, local);
  std::cout << "client " << id << " done\n";
  return 0;
}

int cmd_report(const std::string& log_path, const std::string& csv_path,
               std::optional<double> prompt_params,
               std::optional<double> total_params) {
  if (prompt_params.has_value() != total_params.has_value()) {
    throw fp::InvalidInput(
        "--prompt-params and --total-params must be given together");
  }
  if (prompt_params) {
    const double ratio = fp::fedcore::comm_ratio(*prompt_params, *total_params);
    std::cout << "comm_ratio " << ratio << " (" << std::fixed
              << std::setprecision(4) << ratio * 100.0 << "%)\n";
    if (log_path.empty()) return 0;
    std::cout.unsetf(std::ios::fixed);
  }
  if (log_path.empty()) {
    throw fp::InvalidInput("report needs --log and/or parameter counts");
  }

  std::ifstream in(log_path);
  if (!in) {
    throw fp::IoError("cannot open: " + log_path);
  }
  json header;
  std::vector<json> rounds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw fp::ParseError(std::string("bad round log line: ") + e.what(),
                           line_no);
    }
    if (obj.contains("type") && obj["type"] == "run_header") {
      header = obj;
    } else {
      rounds.push_back(obj);
    }
  }
  if (rounds.empty()) {
    throw fp::ParseError("round log has no round records");
  }

  if (!csv_path.empty()) {
    std::ostringstream csv;
    csv << "round,acc,asr,upload_bytes,download_bytes,prompt_l2\n";
    for (const auto& r : rounds) {
      csv << r["round"].get<std::uint64_t>() << ','
          << r["acc"].get<double>() << ',';
      if (!r["asr"].is_null()) csv << r["asr"].get<double>();
      csv << ',' << r["upload_bytes"].get<std::uint64_t>() << ','
          << r["download_bytes"].get<std::uint64_t>() << ','
          << r["prompt_l2"].get<double>() << '\n';
    }
    write_text(csv_path, csv.str());
    std::cout << "wrote " << rounds.size() << " rows to " << csv_path << "\n";
  }

  std::uint64_t up = 0;
  std::uint64_t down = 0;
  for (const auto& r : rounds) {
    up += r["upload_bytes"].get<std::uint64_t>();
    down += r["download_bytes"].get<std::uint64_t>();
  }
  const auto& last = rounds.back();
  std::cout << "rounds: " << rounds.size() << "\n";
  std::cout << "final acc: " << last["acc"].get<double>() << "\n";
  if (!last["asr"].is_null()) {
    std::cout << "final asr: " << last["asr"].get<double>() << "\n";
  }
  std::cout << "total bytes: " << up + down << " (" << up << " up, " << down
            << " down)\n";
  if (!header.is_null() && header.contains("prompt_params") &&
      header.contains("backbone_params")) {
    const double pp = header["prompt_params"].get<double>();
    const double bp = header["backbone_params"].get<double>();
    const double ratio = fp::fedcore::comm_ratio(pp, pp + bp);
    std::cout << "comm_ratio vs full-model baseline: " << ratio << " ("
              << std::fixed << std::setprecision(4) << ratio * 100.0
              << "%)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedprompt: a deterministic federated soft-prompt tuning lab"};
  app.footer(kExitCodeHelp);
  app.require_subcommand(1);

  // gen-data
  std::uint64_t gd_seed = 1;
  std::size_t gd_n = 2000;
  std::size_t gd_words = 8;
  double gd_contamination = 0.1;
  std::string gd_out = "data.jsonl";
  auto* gen_data = app.add_subcommand("gen-data", "generate the synthetic task");
  gen_data->add_option("--seed", gd_seed, "generator seed");
  gen_data->add_option("--n", gd_n, "number of examples");
  gen_data->add_option("--words", gd_words, "words per text");
  gen_data->add_option("--contamination", gd_contamination,
                       "cross-pool word probability");
  gen_data->add_option("--out", gd_out, "output JSONL path")->required();

  // partition
  std::string pt_data;
  std::size_t pt_clients = 10;
  std::uint64_t pt_seed = 1;
  double pt_alpha = 0.0;
  bool pt_has_alpha = false;
  std::string pt_out = "partition.json";
  auto* partition = app.add_subcommand("partition", "split a dataset into shards");
  partition->add_option("--data", pt_data, "dataset JSONL")->required();
  partition->add_option("--clients", pt_clients, "number of shards");
  partition->add_option("--seed", pt_seed, "shuffle seed");
  partition->add_option("--alpha", pt_alpha, "Dirichlet alpha (omit for IID)")
      ->each([&](const std::string&) { pt_has_alpha = true; });
  partition->add_option("--out", pt_out, "manifest output path");

  // poison-preview
  std::string pp_data;
  std::string pp_partition;
  std::size_t pp_shard = 0;
  std::string pp_trigger = "cf";
  std::uint32_t pp_target = 0;
  double pp_lambda = 1.0;
  std::uint64_t pp_seed = 1;
  std::size_t pp_limit = 10;
  auto* poison_preview =
      app.add_subcommand("poison-preview", "show a shard before/after poisoning");
  poison_preview->add_option("--data", pp_data, "dataset JSONL")->required();
  poison_preview->add_option("--partition", pp_partition, "partition manifest")
      ->required();
  poison_preview->add_option("--shard", pp_shard, "shard index");
  poison_preview->add_option("--trigger", pp_trigger, "trigger word");
  poison_preview->add_option("--target", pp_target, "target label");
  poison_preview->add_option("--lambda", pp_lambda, "poison rate");
  poison_preview->add_option("--seed", pp_seed, "selection seed");
  poison_preview->add_option("--limit", pp_limit, "examples to print");

  // run
  std::string run_config;
  std::string run_out = ".";
  auto* run = app.add_subcommand("run", "run federated training in-process");
  run->add_option("--config", run_config, "config file")->required();
  run->add_option("--out-dir", run_out, "output directory");

  // serve
  std::string sv_config;
  std::string sv_bind = "127.0.0.1:7700";
  std::string sv_out = ".";
  auto* serve = app.add_subcommand("serve", "run the federation server over TCP");
  serve->add_option("--config", sv_config, "config file")->required();
  serve->add_option("--bind", sv_bind, "host:port (port 0 = ephemeral)");
  serve->add_option("--out-dir", sv_out, "output directory");

  // client
  std::uint32_t cl_id = 0;
  std::string cl_connect;
  std::string cl_train;
  std::string cl_partition;
  auto* client = app.add_subcommand("client", "run one federation client");
  client->add_option("--id", cl_id, "client id")->required();
  client->add_option("--connect", cl_connect, "server host:port")->required();
  client->add_option("--train", cl_train,
                     "local training data (file-based runs only)");
  client->add_option("--partition", cl_partition, "partition manifest");

  // report
  std::string rp_log;
  std::string rp_csv;
  double rp_prompt = 0.0;
  double rp_total = 0.0;
  bool rp_has_prompt = false;
  bool rp_has_total = false;
  auto* report = app.add_subcommand("report", "summarize a round log");
  report->add_option("--log", rp_log, "round log JSONL");
  report->add_option("--csv", rp_csv, "per-round CSV output path");
  report->add_option("--prompt-params", rp_prompt, "communicated parameter count")
      ->each([&](const std::string&) { rp_has_prompt = true; });
  report->add_option("--total-params", rp_total, "full-model parameter count")
      ->each([&](const std::string&) { rp_has_total = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen_data) {
      return cmd_gen_data(gd_seed, gd_n, gd_words, gd_contamination, gd_out);
    }
    if (*partition) {
      return cmd_partition(pt_data, pt_clients, pt_seed,
                           pt_has_alpha ? std::optional<double>(pt_alpha)
                                        : std::nullopt,
                           pt_out);
    }
    if (*poison_preview) {
      return cmd_poison_preview(pp_data, pp_partition, pp_shard, pp_trigger,
                                pp_target, pp_lambda, pp_seed, pp_limit);
    }
    if (*run) {
      return cmd_run(run_config, run_out);
    }
    if (*serve) {
      return cmd_serve(sv_config, sv_bind, sv_out);
    }
    if (*client) {
      return cmd_client(cl_id, cl_connect, cl_train, cl_partition);
    }
    if (*report) {
      return cmd_report(rp_log, rp_csv,
                        rp_has_prompt ? std::optional<double>(rp_prompt)
                                      : std::nullopt,
                        rp_has_total ? std::optional<double>(rp_total)
                                     : std::nullopt);
    }
  } catch (const fedprompt::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fedprompt::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const fedprompt::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 6;
  } catch (const fedprompt::TimeoutError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 7;
  } catch (const fedprompt::ProtocolError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const fedprompt::MalformedFrame& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const fedprompt::UnsupportedVersion& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const fedprompt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
