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

#include "tacc/server.hpp"

#include <sys/socket.h>

#include "tacc/archive.hpp"
#include "tacc/errors.hpp"

namespace tacc::controld {

using proto::Frame;
using proto::make_frame;

Server::Server(Controller& ctrl, uint16_t port) : ctrl_(ctrl), listener_(port) {
  accept_th_ = std::thread([this] { accept_loop(); });
}

Server::~Server() { stop(); }

void Server::stop() {
  bool expected = false;
  if (!stopping_.compare_exchange_strong(expected, true)) return;
  listener_.close();
  if (accept_th_.joinable()) accept_th_.join();
  {
    std::lock_guard lk(mu_);
    for (auto& s : sessions_) {
      int fd = s.fd.exchange(-1);
      if (fd >= 0) ::shutdown(fd, SHUT_RDWR);  // the session still closes it
    }
  }
  for (auto& s : sessions_)
    if (s.th.joinable()) s.th.join();
}

void Server::accept_loop() {
  for (;;) {
    int fd = listener_.accept_fd();
    if (fd < 0) return;
    std::lock_guard lk(mu_);
    if (stopping_) {
      ::close(fd);
      return;
    }
    Session& slot = sessions_.emplace_back();
    slot.fd.store(fd);
    slot.th = std::thread([this, &slot, fd] { run_session(&slot, fd); });
  }
}

void Server::run_session(Session* slot, int fd) {
  proto::FdStream s(fd);
  bool hello_done = false;
  std::string line;
  while (!stopping_ && s.read_line(line)) {
    std::string fid;
    try {
      Frame f = proto::parse_frame(line);
      fid = f.id;
      dispatch(s, f, hello_done);
    } catch (const Error& e) {
      if (e.code() == Errc::io_error) break;  // framing is gone
      try {
        s.write_frame(make_frame(fid, "ERROR", proto::error_body(errc_name(e.code()),
                                                                 e.message())));
      } catch (const Error&) {
        break;
      }
      if (!hello_done) break;  // a botched handshake ends the session
    }
  }
  slot->fd.store(-1);
}

void Server::dispatch(proto::FdStream& s, const Frame& f, bool& hello_done) {
  if (!hello_done) {
    if (f.type != "HELLO") fail(Errc::protocol_error, "expected HELLO first");
    if (f.payload.value("version", 0) != proto::kProtocolVersion)
      fail(Errc::protocol_error,
           "unsupported protocol version (server speaks " +
               std::to_string(proto::kProtocolVersion) + ")");
    hello_done = true;
    s.write_frame(make_frame(f.id, "OK",
                             {{"version", proto::kProtocolVersion}, {"server", "controld"}}));
    return;
  }

  if (f.type == "CAS_CHECK") {
    handle_cas_check(s, f);
  } else if (f.type == "CAS_PUT") {
    handle_cas_put(s, f);
  } else if (f.type == "SUBMIT") {
    handle_submit(s, f);
  } else if (f.type == "LIST") {
    s.write_frame(make_frame(
        f.id, "OK",
        {{"jobs", ctrl_.list(f.payload.value("filter", json::object()))},
         {"now", ctrl_.now()}}));
  } else if (f.type == "STATUS") {
    if (!f.payload.contains("job_id")) fail(Errc::protocol_error, "STATUS requires job_id");
    s.write_frame(make_frame(
        f.id, "OK",
        {{"job", ctrl_.status(f.payload.at("job_id").get<std::string>())},
         {"now", ctrl_.now()}}));
  } else if (f.type == "LOGS") {
    handle_logs(s, f);
  } else if (f.type == "FETCH") {
    handle_fetch(s, f);
  } else if (f.type == "KILL") {
    if (!f.payload.contains("job_id")) fail(Errc::protocol_error, "KILL requires job_id");
    std::string id = f.payload.at("job_id").get<std::string>();
    ctrl_.kill(id);
    s.write_frame(make_frame(
        f.id, "OK", {{"job_id", id}, {"state", ctrl_.status(id).at("state")}}));
  } else {
    fail(Errc::protocol_error, "unknown frame type '" + f.type + "'");
  }
}

void Server::handle_cas_check(proto::FdStream& s, const Frame& f) {
  if (!f.payload.contains("hashes") || !f.payload.at("hashes").is_array())
    fail(Errc::protocol_error, "CAS_CHECK requires hashes[]");
  json missing = json::array();
  for (const auto& h : f.payload.at("hashes")) {
    Digest d = Digest::from_hex(h.get<std::string>());
    if (!ctrl_.cas().has(d) && !ctrl_.cas().has_manifest(d)) missing.push_back(d.hex());
  }
  s.write_frame(make_frame(f.id, "OK", {{"missing", std::move(missing)}}));
}

void Server::handle_cas_put(proto::FdStream& s, const Frame& f) {
  // The binary frame is on the wire regardless of what the payload says,
  // so consume it before validating anything.
  Digest claimed = s.read_digest();
  uint64_t len = s.read_u64be();
  if (len > proto::kMaxBlobBytes) fail(Errc::io_error, "CAS_PUT frame exceeds the size limit");
  std::string bytes(len, '\0');
  s.read_exact(bytes.data(), bytes.size());

  std::string kind = f.payload.value("kind", "object");
  Digest stored;
  if (kind == "object") {
    stored = ctrl_.cas().put(bytes);
  } else if (kind == "manifest") {
    bundle::BundleManifest::from_text(bytes);  // reject junk before storing
    stored = ctrl_.cas().put_manifest(bytes);
  } else {
    fail(Errc::protocol_error, "CAS_PUT kind must be object or manifest");
  }
  if (stored != claimed)
    fail(Errc::protocol_error, "uploaded bytes hash to " + stored.hex() + ", not " +
                                   claimed.hex());
  s.write_frame(make_frame(f.id, "OK", {{"stored", stored.hex()}}));
}

void Server::handle_submit(proto::FdStream& s, const Frame& f) {
  if (!f.payload.contains("spec_doc") || !f.payload.contains("manifest"))
    fail(Errc::protocol_error, "SUBMIT requires spec_doc and manifest");
  std::string id =
      ctrl_.submit(f.payload.at("spec_doc"), f.payload.at("manifest").get<std::string>());
  s.write_frame(make_frame(f.id, "OK", {{"job_id", id}}));
}

void Server::handle_logs(proto::FdStream& s, const Frame& f) {
  if (!f.payload.contains("job_id")) fail(Errc::protocol_error, "LOGS requires job_id");
  std::string job = f.payload.at("job_id").get<std::string>();
  if (!ctrl_.job_known(job)) fail(Errc::not_found, "unknown job '" + job + "'");
  bool follow = f.payload.value("follow", false);
  uint64_t since = f.payload.value("since_seq", uint64_t{0});

  for (;;) {
    auto lines = ctrl_.logs().read(job, since, 256);
    for (const auto& ln : lines) {
      s.write_frame(make_frame(f.id, "LOG",
                               {{"seq", ln.seq},
                                {"ts", ln.ts},
                                {"rank", ln.rank},
                                {"stream", ln.stream},
                                {"line", ln.text}}));
      since = ln.seq;
    }
    if (!lines.empty()) continue;  // drain fully before deciding to stop
    if (!follow || ctrl_.logs().terminal(job)) break;
    if (stopping_) break;
    ctrl_.logs().wait(job, since, 250);
  }
  s.write_frame(make_frame(f.id, "OK", {{"eof", true}}));
}

void Server::handle_fetch(proto::FdStream& s, const Frame& f) {
  if (!f.payload.contains("job_id")) fail(Errc::protocol_error, "FETCH requires job_id");
  std::string job = f.payload.at("job_id").get<std::string>();
  std::string glob = f.payload.value("glob", "*");
  archive::Archive a = archive::pack(ctrl_.fetch(job, glob));
  s.write_frame(make_frame(
      f.id, "OK", {{"entries", a.entries}, {"blob_bytes", a.blob.size()}}));
  s.write_u64be(a.blob.size());
  s.write_all(a.blob);
}

}  // namespace tacc::controld
