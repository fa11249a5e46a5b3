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

#include "tacc/protocol.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "tacc/errors.hpp"

namespace tacc::proto {

json make_frame(const std::string& id, const std::string& type, json payload) {
  return {{"id", id}, {"type", type}, {"payload", std::move(payload)}};
}

Frame parse_frame(const std::string& line) {
  json doc = json::parse(line, nullptr, false);
  if (doc.is_discarded() || !doc.is_object())
    fail(Errc::protocol_error, "frame is not a JSON object");
  Frame f;
  try {
    f.id = doc.at("id").get<std::string>();
    f.type = doc.at("type").get<std::string>();
    f.payload = doc.value("payload", json::object());
    if (!f.payload.is_object()) fail(Errc::protocol_error, "payload must be an object");
  } catch (const json::exception& ex) {
    fail(Errc::protocol_error, std::string("malformed frame: ") + ex.what());
  }
  return f;
}

json error_body(const std::string& code, const std::string& message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

// ---- FdStream ----

FdStream::FdStream(int fd) : fd_(fd) {}

FdStream::~FdStream() {
  if (fd_ >= 0) ::close(fd_);
}

bool FdStream::read_line(std::string& out) {
  out.clear();
  for (;;) {
    size_t nl = buf_.find('\n', pos_);
    if (nl != std::string::npos) {
      out.assign(buf_, pos_, nl - pos_);
      pos_ = nl + 1;
      if (pos_ == buf_.size()) {
        buf_.clear();
        pos_ = 0;
      }
      return true;
    }
    char chunk[4096];
    ssize_t n = ::read(fd_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;  // peer reset reads as end of stream
    }
    if (n == 0) {
      if (pos_ < buf_.size()) fail(Errc::io_error, "stream ended mid-line");
      return false;
    }
    buf_.append(chunk, static_cast<size_t>(n));
  }
}

void FdStream::read_exact(void* buf, size_t n) {
  char* dst = static_cast<char*>(buf);
  size_t have = std::min(n, buf_.size() - pos_);
  if (have > 0) {
    std::memcpy(dst, buf_.data() + pos_, have);
    pos_ += have;
    dst += have;
    n -= have;
    if (pos_ == buf_.size()) {
      buf_.clear();
      pos_ = 0;
    }
  }
  while (n > 0) {
    ssize_t r = ::read(fd_, dst, n);
    if (r < 0) {
      if (errno == EINTR) continue;
      fail(Errc::io_error, "stream error inside a binary frame");
    }
    if (r == 0) fail(Errc::io_error, "stream ended inside a binary frame");
    dst += r;
    n -= static_cast<size_t>(r);
  }
}

void FdStream::write_all(std::string_view data) {
  const char* p = data.data();
  size_t n = data.size();
  while (n > 0) {
    // MSG_NOSIGNAL spares us a process-wide SIGPIPE handler; pipes from
    // exec endpoints take the plain write path
    ssize_t w = ::send(fd_, p, n, MSG_NOSIGNAL);
    if (w < 0 && errno == ENOTSOCK) w = ::write(fd_, p, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      fail(Errc::io_error, std::string("write: ") + std::strerror(errno));
    }
    p += w;
    n -= static_cast<size_t>(w);
  }
}

void FdStream::write_frame(const json& frame) { write_all(canonical_dump(frame) + "\n"); }

uint64_t FdStream::read_u64be() {
  unsigned char b[8];
  read_exact(b, sizeof b);
  uint64_t v = 0;
  for (unsigned char c : b) v = (v << 8) | c;
  return v;
}

void FdStream::write_u64be(uint64_t v) {
  unsigned char b[8];
  for (int i = 7; i >= 0; --i) {
    b[i] = static_cast<unsigned char>(v & 0xff);
    v >>= 8;
  }
  write_all(std::string_view(reinterpret_cast<char*>(b), sizeof b));
}

Digest FdStream::read_digest() {
  Digest d;
  read_exact(d.bytes.data(), d.bytes.size());
  return d;
}

// ---- TCP ----

TcpListener::TcpListener(uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) fail(Errc::io_error, std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    int e = errno;
    ::close(fd_);
    fd_ = -1;
    fail(Errc::io_error,
         "bind port " + std::to_string(port) + ": " + std::strerror(e));
  }
  if (::listen(fd_, 64) < 0) {
    int e = errno;
    ::close(fd_);
    fd_ = -1;
    fail(Errc::io_error, std::string("listen: ") + std::strerror(e));
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

TcpListener::~TcpListener() { close(); }

int TcpListener::accept_fd() {
  for (;;) {
    int c = ::accept(fd_, nullptr, nullptr);
    if (c >= 0) {
      int one = 1;
      ::setsockopt(c, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return c;
    }
    if (errno == EINTR) continue;
    return -1;  // listener closed
  }
}

void TcpListener::close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

int connect_tcp(const std::string& host, uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res);
  if (rc != 0)
    fail(Errc::io_error, "resolve " + host + ": " + gai_strerror(rc));
  int fd = -1;
  int saved = 0;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    saved = errno;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0)
    fail(Errc::io_error, "connect " + host + ":" + std::to_string(port) + ": " +
                             std::strerror(saved ? saved : ECONNREFUSED));
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

int connect_endpoint(const std::string& endpoint, pid_t* child_pid) {
  if (child_pid) *child_pid = -1;
  if (endpoint.rfind("exec:", 0) == 0) {
    std::string cmd = endpoint.substr(5);
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) < 0)
      fail(Errc::io_error, std::string("socketpair: ") + std::strerror(errno));
    pid_t pid = ::fork();
    if (pid < 0) {
      ::close(sv[0]);
      ::close(sv[1]);
      fail(Errc::io_error, std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
      ::dup2(sv[1], 0);
      ::dup2(sv[1], 1);
      ::close(sv[0]);
      ::close(sv[1]);
      ::execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    ::close(sv[1]);
    if (child_pid) *child_pid = pid;
    return sv[0];
  }

  size_t colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == endpoint.size())
    fail(Errc::io_error, "endpoint '" + endpoint + "' is not host:port or exec:...");
  std::string host = endpoint.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(endpoint.substr(colon + 1));
  } catch (...) {
    fail(Errc::io_error, "endpoint '" + endpoint + "' has a bad port");
  }
  if (port <= 0 || port > 65535)
    fail(Errc::io_error, "endpoint '" + endpoint + "' has a bad port");
  return connect_tcp(host, static_cast<uint16_t>(port));
}

}  // namespace tacc::proto
