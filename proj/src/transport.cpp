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

#include "fedprompt/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include "fedprompt/errors.hpp"
#include "bytes_util.hpp"

namespace fedprompt::transport {

namespace {

// Frames beyond this size cannot be legitimate: the largest real payload is
// a prompt tensor, a few kilobytes.
constexpr std::uint64_t kMaxPayload = std::uint64_t{1} << 30;

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                        deadline - Clock::now())
                        .count();
  return left < 0 ? 0 : static_cast<int>(left);
}

// Minimal RAII wrapper over a connected TCP socket.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close_fd();
      fd_ = o.fd_;
      o.fd_ = -1;
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close_fd(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

  void send_all(std::span<const std::uint8_t> bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
      const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent,
                               MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw IoError(std::string("send: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  // Reads whole frames off the stream, buffering partial tails.
  WireMessage read_frame(Clock::time_point deadline) {
    for (;;) {
      if (auto decoded = try_decode_prefix(buffer_)) {
        buffer_.erase(buffer_.begin(),
                      buffer_.begin() +
                          static_cast<std::ptrdiff_t>(decoded->second));
        return std::move(decoded->first);
      }
      pollfd pfd{fd_, POLLIN, 0};
      const int pr = ::poll(&pfd, 1, remaining_ms(deadline));
      if (pr < 0) {
        if (errno == EINTR) continue;
        throw IoError(std::string("poll: ") + std::strerror(errno));
      }
      if (pr == 0) {
        throw TimeoutError("timed out waiting for a frame");
      }
      std::uint8_t chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw IoError(std::string("recv: ") + std::strerror(errno));
      }
      if (n == 0) {
        throw IoError("peer closed the connection mid-stream");
      }
      buffer_.insert(buffer_.end(), chunk, chunk + n);
    }
  }

 private:
  void close_fd() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }
  int fd_ = -1;
  std::vector<std::uint8_t> buffer_;
};

sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw InvalidInput("bad IPv4 address: " + host);
  }
  return addr;
}

void send_msg(Socket& sock, const WireMessage& msg) {
  sock.send_all(encode(msg));
}

WireMessage make_error(const std::string& text) {
  WireMessage msg;
  msg.kind = MsgKind::kError;
  msg.payload.assign(text.begin(), text.end());
  return msg;
}

}  // namespace

std::vector<std::uint8_t> encode(const WireMessage& msg) {
  std::vector<std::uint8_t> out;
  out.reserve(kFrameHeaderSize + msg.payload.size());
  out.push_back('F');
  out.push_back('P');
  out.push_back('D');
  out.push_back('T');
  out.push_back(msg.version);
  out.push_back(static_cast<std::uint8_t>(msg.kind));
  bytes::put_u32(out, msg.round);
  bytes::put_u32(out, msg.client_id);
  bytes::put_u64(out, msg.n_k);
  bytes::put_u64(out, msg.payload.size());
  out.insert(out.end(), msg.payload.begin(), msg.payload.end());
  return out;
}

std::optional<std::pair<WireMessage, std::size_t>> try_decode_prefix(
    std::span<const std::uint8_t> b) {
  // Validate eagerly: a bad byte can never become a valid frame, no matter
  // how much more data arrives.
  static constexpr std::uint8_t kMagic[4] = {'F', 'P', 'D', 'T'};
  for (std::size_t i = 0; i < std::min<std::size_t>(4, b.size()); ++i) {
    if (b[i] != kMagic[i]) {
      throw MalformedFrame("bad magic", i);
    }
  }
  if (b.size() >= 5 && b[4] != 1) {
    throw UnsupportedVersion("unsupported frame version " +
                             std::to_string(b[4]));
  }
  if (b.size() >= 6 && (b[5] < 1 || b[5] > 6)) {
    throw MalformedFrame("unknown message kind " + std::to_string(b[5]), 5);
  }
  if (b.size() < kFrameHeaderSize) {
    return std::nullopt;
  }
  const std::uint64_t payload_len = bytes::get_u64(b.data() + 22);
  if (payload_len > kMaxPayload) {
    throw MalformedFrame("payload length " + std::to_string(payload_len) +
                             " exceeds the frame limit",
                         22);
  }
  if (b.size() < kFrameHeaderSize + payload_len) {
    return std::nullopt;
  }
  WireMessage msg;
  msg.version = b[4];
  msg.kind = static_cast<MsgKind>(b[5]);
  msg.round = bytes::get_u32(b.data() + 6);
  msg.client_id = bytes::get_u32(b.data() + 10);
  msg.n_k = bytes::get_u64(b.data() + 14);
  msg.payload.assign(b.begin() + kFrameHeaderSize,
                     b.begin() + kFrameHeaderSize +
                         static_cast<std::ptrdiff_t>(payload_len));
  return std::make_pair(std::move(msg), kFrameHeaderSize + payload_len);
}

WireMessage decode(std::span<const std::uint8_t> bytes) {
  auto decoded = try_decode_prefix(bytes);
  if (!decoded) {
    throw MalformedFrame("truncated frame", bytes.size());
  }
  if (decoded->second != bytes.size()) {
    throw MalformedFrame("trailing bytes after frame", decoded->second);
  }
  return std::move(decoded->first);
}

std::vector<std::uint8_t> prompt_payload(const model::PromptTensor& p) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + p.param_count() * 8);
  bytes::put_u32(out, static_cast<std::uint32_t>(p.m));
  bytes::put_u32(out, static_cast<std::uint32_t>(p.d));
  for (double v : p.values) {
    bytes::put_f64(out, v);
  }
  return out;
}

model::PromptTensor parse_prompt_payload(std::span<const std::uint8_t> b) {
  if (b.size() < 8) {
    throw MalformedFrame("prompt payload too short", b.size());
  }
  const std::uint32_t m = bytes::get_u32(b.data());
  const std::uint32_t d = bytes::get_u32(b.data() + 4);
  if (b.size() != 8 + std::size_t{m} * d * 8) {
    throw MalformedFrame("prompt payload length mismatch", b.size());
  }
  model::PromptTensor p(m, d);
  for (std::size_t i = 0; i < std::size_t{m} * d; ++i) {
    p.values[i] = bytes::get_f64(b.data() + 8 + i * 8);
  }
  return p;
}

fedcore::RunResult serve(const fedcore::FedConfig& cfg,
                         const fedcore::RunInputs& inputs,
                         const ServeOptions& options,
                         std::ostream* round_log) {
  cfg.validate();

  Socket listener(::socket(AF_INET, SOCK_STREAM, 0));
  if (!listener.valid()) {
    throw IoError(std::string("socket: ") + std::strerror(errno));
  }
  const int one = 1;
  ::setsockopt(listener.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = make_addr(options.host, options.port);
  if (::bind(listener.fd(), reinterpret_cast<sockaddr*>(&addr),
             sizeof(addr)) != 0) {
    throw IoError(std::string("bind: ") + std::strerror(errno));
  }
  if (::listen(listener.fd(), static_cast<int>(cfg.clients) + 4) != 0) {
    throw IoError(std::string("listen: ") + std::strerror(errno));
  }
  socklen_t addr_len = sizeof(addr);
  ::getsockname(listener.fd(), reinterpret_cast<sockaddr*>(&addr), &addr_len);
  if (options.on_listening) {
    options.on_listening(ntohs(addr.sin_port));
  }

  // Handshake: every client must HELLO before the first round starts.
  // Duplicate or out-of-range ids are refused without ending the run.
  std::vector<Socket> clients(cfg.clients);
  std::size_t connected = 0;
  const auto hello_deadline =
      Clock::now() + std::chrono::milliseconds(cfg.timeout_ms);
  while (connected < cfg.clients) {
    pollfd pfd{listener.fd(), POLLIN, 0};
    const int pr = ::poll(&pfd, 1, remaining_ms(hello_deadline));
    if (pr == 0) {
      throw TimeoutError("not all clients connected within timeout_ms");
    }
    if (pr < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("poll: ") + std::strerror(errno));
    }
    Socket conn(::accept(listener.fd(), nullptr, nullptr));
    if (!conn.valid()) {
      continue;
    }
    WireMessage hello;
    try {
      hello = conn.read_frame(hello_deadline);
    } catch (const Error&) {
      continue;  // bad or silent client; keep waiting for the rest
    }
    if (hello.kind != MsgKind::kHello ||
        hello.client_id >= cfg.clients) {
      send_msg(conn, make_error("expected HELLO with a valid client id"));
      continue;
    }
    if (clients[hello.client_id].valid()) {
      send_msg(conn, make_error("duplicate client id " +
                                std::to_string(hello.client_id)));
      continue;
    }
    clients[hello.client_id] = std::move(conn);
    ++connected;
  }

  const std::string config_text = fedcore::serialize_config(cfg);
  for (std::size_t k = 0; k < cfg.clients; ++k) {
    WireMessage msg;
    msg.kind = MsgKind::kConfig;
    msg.client_id = static_cast<std::uint32_t>(k);
    msg.payload.assign(config_text.begin(), config_text.end());
    send_msg(clients[k], msg);
  }

  const auto broadcast = [&](const WireMessage& msg) {
    for (auto& sock : clients) {
      if (!sock.valid()) continue;
      try {
        send_msg(sock, msg);
      } catch (const Error&) {
        // Best effort; the run is already ending.
      }
    }
  };

  const fedcore::RoundExecutor executor =
      [&](std::uint32_t t, const std::vector<std::uint32_t>& selected,
          const model::PromptTensor& global) {
        const auto deadline =
            Clock::now() + std::chrono::milliseconds(cfg.timeout_ms);
        for (std::uint32_t k : selected) {
          WireMessage msg;
          msg.kind = MsgKind::kGlobalPrompt;
          msg.round = t;
          msg.client_id = k;
          msg.payload = prompt_payload(global);
          send_msg(clients[k], msg);
        }
        std::vector<fedcore::ClientUpdateMsg> updates;
        updates.reserve(selected.size());
        for (std::uint32_t k : selected) {
          WireMessage frame;
          try {
            frame = clients[k].read_frame(deadline);
          } catch (const TimeoutError&) {
            broadcast(make_error("round " + std::to_string(t) +
                                 " aborted: client " + std::to_string(k) +
                                 " missed the deadline"));
            throw TimeoutError("client " + std::to_string(k) +
                               " missed the round deadline");
          }
          if (frame.kind == MsgKind::kError) {
            broadcast(make_error("round aborted by client error"));
            throw ProtocolError(
                "client " + std::to_string(k) + " reported: " +
                std::string(frame.payload.begin(), frame.payload.end()));
          }
          if (frame.kind != MsgKind::kClientUpdate || frame.round != t ||
              frame.client_id != k) {
            broadcast(make_error("protocol violation"));
            throw ProtocolError("unexpected frame from client " +
                                std::to_string(k));
          }
          fedcore::ClientUpdateMsg update;
          update.round = frame.round;
          update.client_id = frame.client_id;
          update.n_k = frame.n_k;
          update.prompt = parse_prompt_payload(frame.payload);
          updates.push_back(std::move(update));
        }
        return updates;
      };

  fedcore::RunResult result;
  try {
    result = fedcore::run_training(cfg, inputs, executor, round_log);
  } catch (...) {
    broadcast(make_error("server aborted"));
    throw;
  }

  WireMessage done;
  done.kind = MsgKind::kDone;
  done.round = static_cast<std::uint32_t>(cfg.rounds);
  broadcast(done);
  return result;
}

void run_client(std::uint32_t client_id, const std::string& host,
                std::uint16_t port,
                const std::optional<ClientData>& local_data) {
  // The server is expected to be up already; a short connect retry loop
  // absorbs start-up races.
  Socket sock;
  for (int attempt = 0;; ++attempt) {
    Socket candidate(::socket(AF_INET, SOCK_STREAM, 0));
    if (!candidate.valid()) {
      throw IoError(std::string("socket: ") + std::strerror(errno));
    }
    sockaddr_in addr = make_addr(host, port);
    if (::connect(candidate.fd(), reinterpret_cast<sockaddr*>(&addr),
                  sizeof(addr)) == 0) {
      sock = std::move(candidate);
      break;
    }
    if (attempt >= 50) {
      throw IoError("connect to " + host + ":" + std::to_string(port) +
                    " failed: " + std::strerror(errno));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }

  WireMessage hello;
  hello.kind = MsgKind::kHello;
  hello.client_id = client_id;
  send_msg(sock, hello);

  auto deadline = Clock::now() + std::chrono::minutes(10);
  const WireMessage config_frame = sock.read_frame(deadline);
  if (config_frame.kind == MsgKind::kError) {
    throw ProtocolError("server refused: " +
                        std::string(config_frame.payload.begin(),
                                    config_frame.payload.end()));
  }
  if (config_frame.kind != MsgKind::kConfig) {
    throw ProtocolError("expected CONFIG after HELLO");
  }
  const fedcore::FedConfig cfg = fedcore::parse_config(std::string(
      config_frame.payload.begin(), config_frame.payload.end()));

  // Rebuild the client's world exactly as the server sees it.
  data::Dataset train;
  data::Partition partition;
  if (local_data) {
    train = local_data->train;
    partition = local_data->partition;
  } else {
    fedcore::RunInputs inputs = fedcore::prepare_inputs(cfg);
    train = std::move(inputs.train);
    partition = std::move(inputs.partition);
  }
  const fedcore::ClientContext ctx =
      fedcore::materialize_client(cfg, train, partition, client_id);
  const model::Vocab vocab(cfg.vocab);
  const model::Verbalizer verbalizer(vocab, cfg.class_words);
  const model::FrozenBackbone backbone = model::init_backbone(
      cfg.backbone_seed, cfg.vocab, cfg.dim, cfg.hidden, cfg.max_seq);

  for (;;) {
    deadline = Clock::now() + std::chrono::milliseconds(cfg.timeout_ms);
    const WireMessage frame = sock.read_frame(deadline);
    switch (frame.kind) {
      case MsgKind::kGlobalPrompt: {
        const model::PromptTensor global =
            parse_prompt_payload(frame.payload);
        fedcore::ClientUpdateMsg update;
        try {
          update = fedcore::client_round(ctx, frame.round, global, cfg,
                                         backbone, verbalizer);
        } catch (const Error& e) {
          send_msg(sock, make_error(e.what()));
          throw;
        }
        WireMessage reply;
        reply.kind = MsgKind::kClientUpdate;
        reply.round = update.round;
        reply.client_id = update.client_id;
        reply.n_k = update.n_k;
        reply.payload = prompt_payload(update.prompt);
        send_msg(sock, reply);
        break;
      }
      case MsgKind::kDone:
        return;
      case MsgKind::kError:
        throw ProtocolError("server error: " +
                            std::string(frame.payload.begin(),
                                        frame.payload.end()));
      default:
        throw ProtocolError("unexpected frame kind");
    }
  }
}

}  // namespace fedprompt::transport
