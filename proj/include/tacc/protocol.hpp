// Copyright 2026 The tacc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "tacc/hash.hpp"
#include "tacc/util.hpp"

namespace tacc::proto {

constexpr int kProtocolVersion = 1;

// Hard cap on any single binary frame; a desk-scale safety valve against
// a corrupt length prefix allocating the moon.
constexpr uint64_t kMaxBlobBytes = 1ull << 32;

// One NDJSON envelope. `type` is the request verb or OK/ERROR/LOG on the
// way back; `id` echoes the request so a client can pipeline.
struct Frame {
  std::string id;
  std::string type;
  json payload;
};

json make_frame(const std::string& id, const std::string& type, json payload);
Frame parse_frame(const std::string& line);  // throws protocol_error
json error_body(const std::string& code, const std::string& message);

// Buffered reader / writer over one fd (socket or pipe). Owns the fd.
class FdStream {
 public:
  explicit FdStream(int fd);
  ~FdStream();
  FdStream(const FdStream&) = delete;
  FdStream& operator=(const FdStream&) = delete;

  // False on clean EOF with nothing buffered. Stream-level failures (torn
  // line, EOF inside a binary frame) throw io_error: the session is
  // unusable once framing desynchronizes, unlike content errors which are
  // reported in-band as protocol_error.
  bool read_line(std::string& out);
  void read_exact(void* buf, size_t n);
  void write_all(std::string_view data);  // throws io_error
  void write_frame(const json& frame);    // dump + newline

  uint64_t read_u64be();
  void write_u64be(uint64_t v);
  Digest read_digest();

  int fd() const { return fd_; }

 private:
  int fd_;
  std::string buf_;
  size_t pos_ = 0;
};

// ---- TCP plumbing ----

class TcpListener {
 public:
  explicit TcpListener(uint16_t port);  // 0 picks an ephemeral port
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  int accept_fd();  // -1 once closed
  uint16_t bound_port() const { return port_; }
  void close();

 private:
  int fd_ = -1;
  uint16_t port_ = 0;
};

int connect_tcp(const std::string& host, uint16_t port);  // throws io_error

// Endpoint forms: "host:port" for TCP, "exec:<command>" to spawn a child
// whose stdio carries the same byte protocol (this is how an SSH hop is
// expressed: exec:ssh box controld attach ...). For exec endpoints the
// child pid is returned through *child_pid for the caller to reap.
int connect_endpoint(const std::string& endpoint, pid_t* child_pid);

}  // namespace tacc::proto
