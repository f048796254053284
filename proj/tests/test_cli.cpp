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

// End-to-end checks of the command-line surface. CTest exports FEDPROMPT_CLI
// with the built binary's path; when it is absent (running the test binary
// by hand) these cases are skipped.

#include <doctest.h>

#include <cstdio>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "fedprompt/data.hpp"

namespace fs = std::filesystem;
namespace data = fedprompt::data;

namespace {

const char* cli_path() { return std::getenv("FEDPROMPT_CLI"); }

struct CliResult {
  int exit_code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out_file = dir / "cli_output.txt";
  const std::string cmd = std::string(cli_path()) + " " + args + " > " +
                          out_file.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file);
  std::stringstream buf;
  buf << in.rdbuf();
  result.output = buf.str();
  return result;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("fedprompt_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

constexpr const char* kSmallConfig =
    "clients = 3\n"
    "rounds = 2\n"
    "local_steps = 2\n"
    "batch = 4\n"
    "m = 4\n"
    "seed = 5\n"
    "synthetic_train = 60\n"
    "synthetic_test = 30\n"
    "words_per_text = 4\n";

}  // namespace

TEST_CASE("cli: data, partition and run round-trip") {
  if (cli_path() == nullptr) {
    MESSAGE("FEDPROMPT_CLI not set; skipping CLI tests");
    return;
  }
  TempDir tmp;

  // gen-data
  const auto data_path = tmp.path / "data.jsonl";
  auto res = run_cli("gen-data --seed 3 --n 50 --words 5 --out " +
                         data_path.string(),
                     tmp.path);
  REQUIRE(res.exit_code == 0);
  const auto ds = data::load_jsonl(data_path, 2);
  CHECK(ds.size() == 50);

  // partition (IID and Dirichlet)
  const auto manifest_path = tmp.path / "part.json";
  res = run_cli("partition --data " + data_path.string() +
                    " --clients 5 --seed 2 --out " + manifest_path.string(),
                tmp.path);
  REQUIRE(res.exit_code == 0);
  const auto manifest = data::load_partition(manifest_path);
  CHECK(manifest.partition.num_shards() == 5);

  res = run_cli("partition --data " + data_path.string() +
                    " --clients 5 --seed 2 --alpha 0.5 --out " +
                    manifest_path.string(),
                tmp.path);
  REQUIRE(res.exit_code == 0);
  CHECK(data::load_partition(manifest_path).alpha.has_value());

  // poison-preview
  res = run_cli("poison-preview --data " + data_path.string() +
                    " --partition " + manifest_path.string() +
                    " --shard 0 --trigger cf --target 0 --lambda 1.0",
                tmp.path);
  REQUIRE(res.exit_code == 0);
  CHECK(res.output.find("before") != std::string::npos);
  CHECK(res.output.find("after poisoning") != std::string::npos);
  CHECK(res.output.find("cf ") != std::string::npos);
}

TEST_CASE("cli: run is deterministic and report matches the ledger") {
  if (cli_path() == nullptr) {
    MESSAGE("FEDPROMPT_CLI not set; skipping CLI tests");
    return;
  }
  TempDir tmp;
  const auto cfg_path = tmp.path / "run.cfg";
  std::ofstream(cfg_path) << kSmallConfig;

  const auto out_a = tmp.path / "a";
  const auto out_b = tmp.path / "b";
  auto res = run_cli("run --config " + cfg_path.string() + " --out-dir " +
                         out_a.string(),
                     tmp.path);
  REQUIRE(res.exit_code == 0);
  res = run_cli("run --config " + cfg_path.string() + " --out-dir " +
                    out_b.string(),
                tmp.path);
  REQUIRE(res.exit_code == 0);

  // Same config, same seeds: byte-identical artifacts.
  CHECK(read_file(out_a / "roundlog.jsonl") ==
        read_file(out_b / "roundlog.jsonl"));
  CHECK(read_file(out_a / "final_prompt.fppt") ==
        read_file(out_b / "final_prompt.fppt"));

  // report: CSV has one row per round plus the header line.
  const auto csv_path = tmp.path / "rounds.csv";
  res = run_cli("report --log " + (out_a / "roundlog.jsonl").string() +
                    " --csv " + csv_path.string(),
                tmp.path);
  REQUIRE(res.exit_code == 0);
  std::ifstream csv(csv_path);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(csv, line)) rows.push_back(line);
  REQUIRE(rows.size() == 3);  // header + 2 rounds
  CHECK(rows[0] == "round,acc,asr,upload_bytes,download_bytes,prompt_l2");
  CHECK(res.output.find("total bytes") != std::string::npos);
  CHECK(res.output.find("comm_ratio vs full-model baseline") !=
        std::string::npos);

  // Per-round byte columns must sum to the ledger's cumulative totals:
  // 2 rounds x 3 clients x (4 x 32 prompt scalars) x 8 bytes each way.
  std::uint64_t up_sum = 0, down_sum = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    std::istringstream fields(rows[r]);
    std::string field;
    std::vector<std::string> cols;
    while (std::getline(fields, field, ',')) cols.push_back(field);
    REQUIRE(cols.size() == 6);
    up_sum += std::stoull(cols[3]);
    down_sum += std::stoull(cols[4]);
  }
  const std::uint64_t expected = 2ull * 3 * (4 * 32) * 8;
  CHECK(up_sum == expected);
  CHECK(down_sum == expected);
}

TEST_CASE("cli: published parameter counts reproduce published ratios") {
  if (cli_path() == nullptr) {
    MESSAGE("FEDPROMPT_CLI not set; skipping CLI tests");
    return;
  }
  TempDir tmp;
  auto res = run_cli(
      "report --prompt-params 16000 --total-params 109530000", tmp.path);
  REQUIRE(res.exit_code == 0);
  CHECK(res.output.find("0.0146%") != std::string::npos);
}

TEST_CASE("cli: serve and client subprocesses reproduce the in-process log") {
  if (cli_path() == nullptr) {
    MESSAGE("FEDPROMPT_CLI not set; skipping CLI tests");
    return;
  }
  TempDir tmp;
  const auto cfg_path = tmp.path / "net.cfg";
  std::ofstream(cfg_path) << "clients = 2\n"
                          << "rounds = 2\n"
                          << "local_steps = 2\n"
                          << "batch = 4\n"
                          << "m = 4\n"
                          << "seed = 5\n"
                          << "synthetic_train = 40\n"
                          << "synthetic_test = 20\n"
                          << "words_per_text = 4\n";

  // Reference: the same config through `run`.
  const auto ref_dir = tmp.path / "ref";
  auto res = run_cli("run --config " + cfg_path.string() + " --out-dir " +
                         ref_dir.string(),
                     tmp.path);
  REQUIRE(res.exit_code == 0);

  // Server on an ephemeral port; parse the announced port from its stdout.
  const auto srv_dir = tmp.path / "srv";
  fs::create_directories(srv_dir);
  const std::string cmd = std::string(cli_path()) + " serve --config " +
                          cfg_path.string() + " --bind 127.0.0.1:0" +
                          " --out-dir " + srv_dir.string() + " 2>&1";
  FILE* server = popen(cmd.c_str(), "r");
  REQUIRE(server != nullptr);
  char line[256];
  REQUIRE(fgets(line, sizeof(line), server) != nullptr);
  int port = 0;
  REQUIRE(std::sscanf(line, "listening on %d", &port) == 1);

  const auto client = [&](int id) {
    return run_cli("client --id " + std::to_string(id) + " --connect 127.0.0.1:" +
                       std::to_string(port),
                   tmp.path)
        .exit_code;
  };
  std::thread c0([&] { CHECK(client(0) == 0); });
  std::thread c1([&] { CHECK(client(1) == 0); });
  c0.join();
  c1.join();
  while (fgets(line, sizeof(line), server) != nullptr) {
  }
  const int server_status = pclose(server);
  CHECK(WIFEXITED(server_status));
  CHECK(WEXITSTATUS(server_status) == 0);

  CHECK(read_file(srv_dir / "roundlog.jsonl") ==
        read_file(ref_dir / "roundlog.jsonl"));
  CHECK(read_file(srv_dir / "final_prompt.fppt") ==
        read_file(ref_dir / "final_prompt.fppt"));
}

TEST_CASE("cli: exit codes distinguish failure classes") {
  if (cli_path() == nullptr) {
    MESSAGE("FEDPROMPT_CLI not set; skipping CLI tests");
    return;
  }
  TempDir tmp;

  // Missing config file: I/O failure.
  auto res = run_cli("run --config /nonexistent/nope.cfg", tmp.path);
  CHECK(res.exit_code == 3);

  // Malformed config: parse failure.
  const auto bad_cfg = tmp.path / "bad.cfg";
  std::ofstream(bad_cfg) << "no_such_key = 1\n";
  res = run_cli("run --config " + bad_cfg.string(), tmp.path);
  CHECK(res.exit_code == 2);

  // Unknown flag: usage error.
  res = run_cli("run --config x --bogus-flag", tmp.path);
  CHECK(res.exit_code == 2);

  // Valid data but an impossible partition request.
  const auto data_path = tmp.path / "tiny.jsonl";
  std::ofstream(data_path) << R"({"text":"a","label":0})" << "\n"
                           << R"({"text":"b","label":1})" << "\n";
  res = run_cli("partition --data " + data_path.string() +
                    " --clients 5 --out " + (tmp.path / "p.json").string(),
                tmp.path);
  CHECK(res.exit_code == 4);
}
