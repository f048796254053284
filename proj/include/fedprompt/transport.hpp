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

#ifndef FEDPROMPT_TRANSPORT_HPP
#define FEDPROMPT_TRANSPORT_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedprompt/fedcore.hpp"

// Message layer with two interchangeable backends: the in-process executor
// in fedcore (default) and the framed TCP protocol here. Same seeds, same
// round log, either way.

namespace fedprompt::transport {

enum class MsgKind : std::uint8_t {
  kHello = 1,
  kConfig = 2,
  kGlobalPrompt = 3,
  kClientUpdate = 4,
  kDone = 5,
  kError = 6,
};

// Frame layout, all integers little-endian:
//   magic "FPDT" | version u8 (=1) | kind u8 | round u32 | client_id u32 |
//   n_k u64 | payload_len u64 | payload bytes.
// Prompt payloads are m u32, d u32, then m*d doubles, row-major.
struct WireMessage {
  std::uint8_t version = 1;
  MsgKind kind = MsgKind::kHello;
  std::uint32_t round = 0;
  std::uint32_t client_id = 0;
  std::uint64_t n_k = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const WireMessage&) const = default;
};

inline constexpr std::size_t kFrameHeaderSize = 30;

std::vector<std::uint8_t> encode(const WireMessage& msg);

// Decodes exactly one whole message; trailing bytes are an error.
WireMessage decode(std::span<const std::uint8_t> bytes);

// Stream framing: returns the first complete message and its encoded size,
// or nullopt if the buffer holds only an incomplete tail. Throws on bytes
// that can never become a valid frame.
std::optional<std::pair<WireMessage, std::size_t>> try_decode_prefix(
    std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> prompt_payload(const model::PromptTensor& p);
model::PromptTensor parse_prompt_payload(std::span<const std::uint8_t> bytes);

struct ServeOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks an ephemeral port
  // Called once the socket is listening, with the bound port.
  std::function<void(std::uint16_t)> on_listening;
};

// Runs the full server loop over TCP: waits for all cfg.clients HELLOs,
// ships the config, then drives cfg.rounds rounds with a per-round barrier.
// Missing updates past cfg.timeout_ms abort the run with an ERROR
// broadcast.
fedcore::RunResult serve(const fedcore::FedConfig& cfg,
                         const fedcore::RunInputs& inputs,
                         const ServeOptions& options,
                         std::ostream* round_log);

// File-based runs need the client's local copy of the data; synthetic runs
// regenerate everything from the config.
struct ClientData {
  data::Dataset train;
  data::Partition partition;
};

// Passive responder: HELLO, receive config, then answer GLOBAL_PROMPT
// frames with CLIENT_UPDATEs until DONE.
void run_client(std::uint32_t client_id, const std::string& host,
                std::uint16_t port,
                const std::optional<ClientData>& local_data = std::nullopt);

}  // namespace fedprompt::transport

#endif  // FEDPROMPT_TRANSPORT_HPP
