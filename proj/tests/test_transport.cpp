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

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <future>
#include <sstream>
#include <thread>

#include "fedprompt/errors.hpp"
#include "fedprompt/transport.hpp"

namespace transport = fedprompt::transport;
namespace fedcore = fedprompt::fedcore;
namespace model = fedprompt::model;
using fedprompt::MalformedFrame;
using fedprompt::TimeoutError;
using fedprompt::UnsupportedVersion;

namespace {

fedcore::FedConfig loopback_config() {
  fedcore::FedConfig cfg = fedcore::parse_config("");
  cfg.clients = 2;
  cfg.rounds = 3;
  cfg.local_steps = 2;
  cfg.batch = 4;
  cfg.prompt_tokens = 4;
  cfg.synthetic_train = 40;
  cfg.synthetic_test = 20;
  cfg.words_per_text = 4;
  cfg.timeout_ms = 20000;
  return cfg;
}

transport::WireMessage sample_update() {
  transport::WireMessage msg;
  msg.kind = transport::MsgKind::kClientUpdate;
  msg.round = 5;
  msg.client_id = 3;
  msg.n_k = 200;
  msg.payload = transport::prompt_payload(model::init_prompt(1, 20, 32));
  return msg;
}

// Bare-bones scripted client for protocol-level tests.
class RawClient {
 public:
  RawClient(std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    REQUIRE(fd_ >= 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    REQUIRE(::connect(fd_, reinterpret_cast<sockaddr*>(&addr),
                      sizeof(addr)) == 0);
  }
  ~RawClient() {
    if (fd_ >= 0) ::close(fd_);
  }

  void send(const transport::WireMessage& msg) {
    const auto bytes = transport::encode(msg);
    REQUIRE(::send(fd_, bytes.data(), bytes.size(), 0) ==
            static_cast<ssize_t>(bytes.size()));
  }

  transport::WireMessage recv_frame() {
    for (;;) {
      if (auto decoded = transport::try_decode_prefix(buffer_)) {
        buffer_.erase(buffer_.begin(),
                      buffer_.begin() +
                          static_cast<std::ptrdiff_t>(decoded->second));
        return decoded->first;
      }
      std::uint8_t chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
      REQUIRE(n > 0);
      buffer_.insert(buffer_.end(), chunk, chunk + n);
    }
  }

 private:
  int fd_ = -1;
  std::vector<std::uint8_t> buffer_;
};

}  // namespace

TEST_CASE("wire: round-trip of a prompt update") {
  const auto msg = sample_update();
  const auto bytes = transport::encode(msg);
  CHECK(bytes.size() == transport::kFrameHeaderSize + msg.payload.size());
  const auto back = transport::decode(bytes);
  CHECK(back == msg);
  const auto prompt = transport::parse_prompt_payload(back.payload);
  CHECK(prompt.m == 20);
  CHECK(prompt.d == 32);
  CHECK(prompt.values == model::init_prompt(1, 20, 32).values);
}

TEST_CASE("wire: every message kind round-trips") {
  for (std::uint8_t kind = 1; kind <= 6; ++kind) {
    transport::WireMessage msg;
    msg.kind = static_cast<transport::MsgKind>(kind);
    msg.round = kind * 7u;
    msg.client_id = kind;
    msg.n_k = kind * 1000ull;
    msg.payload.assign(kind * 3, static_cast<std::uint8_t>(kind));
    CHECK(transport::decode(transport::encode(msg)) == msg);
  }
}

TEST_CASE("wire: malformed frames") {
  const auto bytes = transport::encode(sample_update());

  SUBCASE("truncated header") {
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 10);
    CHECK_THROWS_AS(transport::decode(cut), MalformedFrame);
  }
  SUBCASE("wrong magic") {
    auto bad = bytes;
    bad[0] = 'X';
    bad[1] = 'X';
    try {
      transport::decode(bad);
      FAIL("expected MalformedFrame");
    } catch (const MalformedFrame& e) {
      CHECK(e.offset() == 0);
    }
  }
  SUBCASE("unsupported version") {
    auto bad = bytes;
    bad[4] = 2;
    CHECK_THROWS_AS(transport::decode(bad), UnsupportedVersion);
  }
  SUBCASE("unknown kind") {
    auto bad = bytes;
    bad[5] = 9;
    CHECK_THROWS_AS(transport::decode(bad), MalformedFrame);
  }
  SUBCASE("truncated payload") {
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 4);
    CHECK_THROWS_AS(transport::decode(cut), MalformedFrame);
  }
  SUBCASE("trailing bytes") {
    auto padded = bytes;
    padded.push_back(0);
    CHECK_THROWS_AS(transport::decode(padded), MalformedFrame);
  }
}

TEST_CASE("wire: any prefix of a valid stream splits cleanly") {
  // Self-delimiting framing: each prefix yields whole messages plus an
  // incomplete tail, never an error.
  std::vector<std::uint8_t> stream;
  std::vector<transport::WireMessage> sent;
  for (int i = 0; i < 4; ++i) {
    transport::WireMessage msg;
    msg.kind = static_cast<transport::MsgKind>(1 + i);
    msg.round = static_cast<std::uint32_t>(i);
    msg.payload.assign(i * 5, static_cast<std::uint8_t>(i));
    sent.push_back(msg);
    const auto bytes = transport::encode(msg);
    stream.insert(stream.end(), bytes.begin(), bytes.end());
  }

  for (std::size_t cut = 0; cut <= stream.size(); ++cut) {
    std::span<const std::uint8_t> window(stream.data(), cut);
    std::size_t decoded = 0;
    while (true) {
      const auto result = transport::try_decode_prefix(window);
      if (!result) break;
      CHECK(result->first == sent[decoded]);
      window = window.subspan(result->second);
      ++decoded;
    }
    // Whatever remains is a strict prefix of the next frame.
    CHECK(window.size() < transport::encode(sent[std::min(
                              decoded, sent.size() - 1)]).size());
  }
}

TEST_CASE("transport: loopback run matches the in-process backend byte for "
          "byte") {
  const auto cfg = loopback_config();
  const auto inputs = fedcore::prepare_inputs(cfg);

  std::ostringstream in_process_log;
  const auto in_process =
      fedcore::run_training(cfg, inputs, &in_process_log);

  std::promise<std::uint16_t> port_promise;
  auto port_future = port_promise.get_future();
  transport::ServeOptions options;
  options.port = 0;
  options.on_listening = [&](std::uint16_t p) { port_promise.set_value(p); };

  std::ostringstream net_log;
  fedcore::RunResult net_result;
  std::thread server([&] {
    net_result = transport::serve(cfg, inputs, options, &net_log);
  });
  const std::uint16_t port = port_future.get();
  std::thread c0([&] { transport::run_client(0, "127.0.0.1", port); });
  std::thread c1([&] { transport::run_client(1, "127.0.0.1", port); });
  c0.join();
  c1.join();
  server.join();

  CHECK(net_log.str() == in_process_log.str());
  CHECK(net_result.final_prompt.values == in_process.final_prompt.values);
}

TEST_CASE("transport: duplicate HELLO is refused, run continues") {
  auto cfg = loopback_config();
  cfg.clients = 2;
  cfg.rounds = 1;
  cfg.local_steps = 0;
  cfg.timeout_ms = 10000;
  const auto inputs = fedcore::prepare_inputs(cfg);

  std::promise<std::uint16_t> port_promise;
  auto port_future = port_promise.get_future();
  transport::ServeOptions options;
  options.port = 0;
  options.on_listening = [&](std::uint16_t p) { port_promise.set_value(p); };

  std::ostringstream log;
  fedcore::RunResult result;
  std::exception_ptr server_error;
  std::thread server([&] {
    try {
      result = transport::serve(cfg, inputs, options, &log);
    } catch (...) {
      server_error = std::current_exception();
    }
  });
  const std::uint16_t port = port_future.get();

  transport::WireMessage hello;
  hello.kind = transport::MsgKind::kHello;
  hello.client_id = 0;

  // Client 0 joins; the handshake stays open waiting for client 1.
  RawClient first(port);
  first.send(hello);

  // A second connection with the same id gets an ERROR and no config.
  {
    RawClient dup(port);
    dup.send(hello);
    const auto refusal = dup.recv_frame();
    CHECK(refusal.kind == transport::MsgKind::kError);
  }

  // The real client 1 completes the handshake.
  RawClient second(port);
  hello.client_id = 1;
  second.send(hello);

  // Both echo the round-1 prompt; the run then finishes normally.
  for (RawClient* c : {&first, &second}) {
    CHECK(c->recv_frame().kind == transport::MsgKind::kConfig);
    const auto prompt_frame = c->recv_frame();
    REQUIRE(prompt_frame.kind == transport::MsgKind::kGlobalPrompt);
    transport::WireMessage reply;
    reply.kind = transport::MsgKind::kClientUpdate;
    reply.round = prompt_frame.round;
    reply.client_id = prompt_frame.client_id;
    reply.n_k = 5;
    reply.payload = prompt_frame.payload;
    c->send(reply);
  }
  CHECK(first.recv_frame().kind == transport::MsgKind::kDone);
  CHECK(second.recv_frame().kind == transport::MsgKind::kDone);
  server.join();
  REQUIRE(server_error == nullptr);
  CHECK(result.log.size() == 1);
}

TEST_CASE("transport: a silent client aborts the round with an ERROR") {
  auto cfg = loopback_config();
  cfg.clients = 1;
  cfg.rounds = 1;
  cfg.local_steps = 0;
  cfg.timeout_ms = 600;  // short barrier so the test stays fast
  const auto inputs = fedcore::prepare_inputs(cfg);

  std::promise<std::uint16_t> port_promise;
  auto port_future = port_promise.get_future();
  transport::ServeOptions options;
  options.port = 0;
  options.on_listening = [&](std::uint16_t p) { port_promise.set_value(p); };

  std::exception_ptr server_error;
  std::thread server([&] {
    try {
      transport::serve(cfg, inputs, options, nullptr);
    } catch (...) {
      server_error = std::current_exception();
    }
  });
  const std::uint16_t port = port_future.get();

  RawClient silent(port);
  transport::WireMessage hello;
  hello.kind = transport::MsgKind::kHello;
  hello.client_id = 0;
  silent.send(hello);
  CHECK(silent.recv_frame().kind == transport::MsgKind::kConfig);
  CHECK(silent.recv_frame().kind == transport::MsgKind::kGlobalPrompt);
  // ... and never answers. The server must broadcast ERROR and give up.
  CHECK(silent.recv_frame().kind == transport::MsgKind::kError);
  server.join();
  REQUIRE(server_error != nullptr);
  CHECK_THROWS_AS(std::rethrow_exception(server_error), TimeoutError);
}
