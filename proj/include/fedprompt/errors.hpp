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

#ifndef FEDPROMPT_ERRORS_HPP
#define FEDPROMPT_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedprompt {

// Base class for every error raised by the library. The CLI maps each
// subclass to a distinct exit code, so scripts can branch on failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller passed a value outside an operation's documented domain.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// A non-finite value appeared where the math requires finite ones. Usually
// signals divergence (e.g. an absurd learning rate), not a code bug.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Local training was asked to run on a shard with no examples.
class EmptyShard : public Error {
 public:
  using Error::Error;
};

// A text input (JSONL line, config line) could not be parsed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what), line_(0) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A label fell outside [0, num_classes).
class InvalidLabel : public Error {
 public:
  using Error::Error;
};

// More client shards requested than there are examples.
class TooManyClients : public Error {
 public:
  using Error::Error;
};

// Dirichlet partitioning could not produce valid shard counts.
class PartitionError : public Error {
 public:
  using Error::Error;
};

// Poisoning was requested but no example is eligible.
class PoisonError : public Error {
 public:
  using Error::Error;
};

// Federation-level contract violation: mismatched shapes, rounds or ids.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// A wire frame failed to decode; `offset` is the byte where decoding stopped.
class MalformedFrame : public Error {
 public:
  MalformedFrame(const std::string& what, std::size_t offset)
      : Error(what + " (offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class UnsupportedVersion : public Error {
 public:
  using Error::Error;
};

// A networked peer missed its deadline.
class TimeoutError : public Error {
 public:
  using Error::Error;
};

// Filesystem or socket failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedprompt

#endif  // FEDPROMPT_ERRORS_HPP
