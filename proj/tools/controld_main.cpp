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
//
// controld — the per-cluster controller daemon.
//
//   controld serve  --state-dir DIR --config FILE [--policy FILE]
//                   [--port N] [--port-file FILE] [--sim-speedup X]
//   controld attach (--port N | --port-file FILE) [--host H]
//
// `serve` runs the event-sourced controller plus the TCP protocol server and
// drives the scheduler at one virtual tick per wall second (scaled by
// --sim-speedup for tests).  `attach` bridges stdio to a local controller
// port; pointing a client at endpoint "exec:ssh host controld attach ..."
// yields the SSH deployment transport without any client-side changes.

#include <signal.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "tacc/controller.hpp"
#include "tacc/errors.hpp"
#include "tacc/protocol.hpp"
#include "tacc/server.hpp"

namespace {

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

void install_handlers() {
  struct sigaction sa {};
  sa.sa_handler = on_signal;
  sigemptyset(&sa.sa_mask);
  sigaction(SIGINT, &sa, nullptr);
  sigaction(SIGTERM, &sa, nullptr);
  signal(SIGPIPE, SIG_IGN);
}

tacc::json load_json(const std::filesystem::path& p) {
  tacc::json doc = tacc::json::parse(tacc::read_file(p), nullptr, false);
  if (doc.is_discarded())
    tacc::fail(tacc::Errc::schema_invalid, p.string() + " is not valid JSON");
  return doc;
}

int run_serve(const std::string& state_dir, const std::string& config_file,
              const std::string& policy_file, uint16_t port,
              const std::string& port_file, double speedup) {
  tacc::controld::ControllerConfig cfg =
      tacc::controld::ControllerConfig::from_json(load_json(config_file));
  tacc::sched::Policy policy;
  if (!policy_file.empty()) policy = tacc::sched::Policy::from_json(load_json(policy_file));

  tacc::controld::Controller ctrl(state_dir, cfg, policy);
  tacc::controld::Server server(ctrl, port);
  std::cerr << "controld: state " << state_dir << ", listening on port " << server.port()
            << "\n";
  if (!port_file.empty())
    tacc::write_file_atomic(port_file, std::to_string(server.port()) + "\n");

  // Virtual time advances at `speedup` seconds per wall second, anchored at
  // the recovered clock so restarts never move time backwards.
  const int64_t base_virtual = ctrl.now();
  const int64_t wall0 = tacc::mono_now_ms();
  int64_t last_tick = base_virtual;
  while (!g_stop) {
    int64_t sleep_ms = std::max<int64_t>(10, static_cast<int64_t>(1000.0 / speedup));
    std::this_thread::sleep_for(std::chrono::milliseconds(std::min<int64_t>(sleep_ms, 200)));
    int64_t vnow =
        base_virtual +
        static_cast<int64_t>((tacc::mono_now_ms() - wall0) * speedup / 1000.0);
    if (vnow > last_tick) {
      ctrl.tick(vnow);
      last_tick = vnow;
    }
  }
  std::cerr << "controld: shutting down\n";
  server.stop();
  return 0;
}

// Copies fd -> fd until EOF; used in both directions by `attach`.
void pump(int from, int to) {
  char buf[64 * 1024];
  for (;;) {
    ssize_t n = ::read(from, buf, sizeof buf);
    if (n <= 0) break;
    const char* p = buf;
    while (n > 0) {
      ssize_t w = ::write(to, p, static_cast<size_t>(n));
      if (w <= 0) return;
      p += w;
      n -= w;
    }
  }
}

int run_attach(const std::string& host, uint16_t port, const std::string& port_file) {
  if (port == 0 && !port_file.empty()) {
    port = static_cast<uint16_t>(std::stoi(tacc::read_file(port_file)));
  }
  if (port == 0) {
    std::cerr << "controld attach: no port given\n";
    return 2;
  }
  int fd = tacc::proto::connect_tcp(host, port);
  std::thread up([fd] {
    pump(STDIN_FILENO, fd);
    ::shutdown(fd, SHUT_WR);
  });
  pump(fd, STDOUT_FILENO);
  ::shutdown(fd, SHUT_RD);
  up.join();
  ::close(fd);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  install_handlers();

  CLI::App app{"tacc controller daemon"};
  app.require_subcommand(1);

  std::string state_dir, config_file, policy_file, port_file;
  uint16_t port = 0;
  double speedup = 1.0;
  auto* serve = app.add_subcommand("serve", "run the controller");
  serve->add_option("--state-dir", state_dir, "event log + CAS directory")->required();
  serve->add_option("--config", config_file, "cluster config JSON")->required();
  serve->add_option("--policy", policy_file, "scheduling policy JSON");
  serve->add_option("--port", port, "TCP port (0 = ephemeral)");
  serve->add_option("--port-file", port_file, "write the bound port here once listening");
  serve->add_option("--sim-speedup", speedup, "virtual seconds per wall second")
      ->check(CLI::PositiveNumber);

  std::string a_host = "127.0.0.1", a_port_file;
  uint16_t a_port = 0;
  auto* attach = app.add_subcommand("attach", "bridge stdio to a controller port");
  attach->add_option("--host", a_host, "controller host");
  attach->add_option("--port", a_port, "controller port");
  attach->add_option("--port-file", a_port_file, "read the port from this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(serve))
      return run_serve(state_dir, config_file, policy_file, port, port_file, speedup);
    return run_attach(a_host, a_port, a_port_file);
  } catch (const tacc::Error& e) {
    std::cerr << "controld: " << tacc::errc_name(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "controld: " << e.what() << "\n";
    return 1;
  }
}
