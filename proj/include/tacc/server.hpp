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

#include <atomic>
#include <deque>
#include <mutex>
#include <thread>

#include "tacc/controller.hpp"
#include "tacc/protocol.hpp"

namespace tacc::controld {

// Serves the wire protocol on plain TCP. One thread per connection; every
// handler funnels into the Controller, which does its own locking, so
// sessions are independent of each other and of the tick timer.
class Server {
 public:
  Server(Controller& ctrl, uint16_t port);  // port 0 = ephemeral
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  uint16_t port() const { return listener_.bound_port(); }
  void stop();  // idempotent; joins all sessions

 private:
  struct Session {
    std::thread th;
    std::atomic<int> fd{-1};  // -1 once the session owns/closed it
  };

  void accept_loop();
  void run_session(Session* slot, int fd);
  void dispatch(proto::FdStream& s, const proto::Frame& f, bool& hello_done);

  void handle_cas_check(proto::FdStream& s, const proto::Frame& f);
  void handle_cas_put(proto::FdStream& s, const proto::Frame& f);
  void handle_submit(proto::FdStream& s, const proto::Frame& f);
  void handle_logs(proto::FdStream& s, const proto::Frame& f);
  void handle_fetch(proto::FdStream& s, const proto::Frame& f);

  Controller& ctrl_;
  proto::TcpListener listener_;
  std::atomic<bool> stopping_{false};
  std::thread accept_th_;
  std::mutex mu_;
  std::deque<Session> sessions_;
};

}  // namespace tacc::controld
