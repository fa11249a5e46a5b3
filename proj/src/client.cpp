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

#include "tacc/client.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>

#include "tacc/schema.hpp"

namespace fs = std::filesystem;

namespace tacc::tcloud {

using proto::Frame;
using proto::make_frame;

// ---- config ----

ClientConfig ClientConfig::from_json(const json& doc) {
  ClientConfig c;
  if (!doc.is_object()) fail(Errc::schema_invalid, "config must be an object");
  try {
    if (doc.contains("clusters"))
      for (const auto& e : doc.at("clusters")) {
        ClusterEntry entry{e.at("name").get<std::string>(),
                           e.at("endpoint").get<std::string>()};
        if (entry.name.empty()) fail(Errc::schema_invalid, "cluster name must be non-empty");
        if (c.find(entry.name))
          fail(Errc::schema_invalid, "duplicate cluster name '" + entry.name + "'");
        c.clusters.push_back(std::move(entry));
      }
    if (doc.contains("current")) c.current = doc.at("current").get<std::string>();
  } catch (const json::exception& ex) {
    fail(Errc::schema_invalid, std::string("malformed client config: ") + ex.what());
  }
  if (!c.current.empty() && !c.find(c.current))
    fail(Errc::schema_invalid, "current cluster '" + c.current + "' is not configured");
  return c;
}

json ClientConfig::to_json() const {
  json arr = json::array();
  for (const auto& e : clusters)
    arr.push_back({{"name", e.name}, {"endpoint", e.endpoint}});
  return {{"clusters", std::move(arr)}, {"current", current}};
}

const ClusterEntry* ClientConfig::find(const std::string& name) const {
  for (const auto& e : clusters)
    if (e.name == name) return &e;
  return nullptr;
}

fs::path default_config_path() {
  if (const char* p = std::getenv("TCLOUD_CONFIG")) return p;
  const char* home = std::getenv("HOME");
  return fs::path(home ? home : ".") / ".config" / "tcloud" / "config.json";
}

ClientConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) return {};
  json doc = json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded())
    fail(Errc::schema_invalid, "config at " + path.string() + " is not valid JSON");
  return ClientConfig::from_json(doc);
}

void save_config(const fs::path& path, const ClientConfig& cfg) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  write_file_atomic(path, canonical_text(cfg.to_json()));
}

fs::path cache_cas_root() {
  if (const char* p = std::getenv("TCLOUD_CACHE")) return fs::path(p) / "cas";
  const char* home = std::getenv("HOME");
  return fs::path(home ? home : ".") / ".cache" / "tcloud" / "cas";
}

// ---- session ----

ClientSession::ClientSession(const std::string& endpoint) {
  int fd = proto::connect_endpoint(endpoint, &child_);
  s_ = std::make_unique<proto::FdStream>(fd);
  try {
    s_->write_frame(make_frame(fresh_id(), "HELLO", {{"version", proto::kProtocolVersion}}));
    std::string line;
    if (!s_->read_line(line)) fail(Errc::io_error, "server closed the connection on HELLO");
    Frame reply = proto::parse_frame(line);
    if (reply.type != "OK")
      fail(Errc::io_error, "handshake rejected: " +
                               reply.payload.value("error", json::object())
                                   .value("message", std::string("unknown")));
  } catch (...) {
    close_and_reap();
    throw;
  }
}

ClientSession::~ClientSession() { close_and_reap(); }

void ClientSession::close_and_reap() {
  s_.reset();  // closes the fd, which is the exec child's stdin EOF
  if (child_ > 0) {
    int status = 0;
    ::waitpid(child_, &status, 0);
    child_ = -1;
  }
}

std::string ClientSession::fresh_id() { return "c" + std::to_string(next_++); }

Frame ClientSession::read_reply(const std::string& id) {
  std::string line;
  for (;;) {
    if (!s_->read_line(line)) fail(Errc::io_error, "connection lost awaiting a reply");
    Frame f = proto::parse_frame(line);
    if (f.id != id) continue;  // stale stream frames from an aborted request
    if (f.type == "ERROR") {
      const json& err = f.payload.value("error", json::object());
      std::string code = err.value("code", "PROTOCOL_ERROR");
      Errc c;
      try {
        c = errc_from_name(code);
      } catch (const Error&) {
        c = Errc::protocol_error;
      }
      throw ServerError(c, err.value("message", "server error"));
    }
    return f;
  }
}

json ClientSession::request(const std::string& type, json payload) {
  std::string id = fresh_id();
  s_->write_frame(make_frame(id, type, std::move(payload)));
  Frame reply = read_reply(id);
  if (reply.type != "OK")
    fail(Errc::protocol_error, "unexpected " + reply.type + " reply to " + type);
  return reply.payload;
}

std::vector<std::string> ClientSession::cas_check(const std::vector<std::string>& hashes) {
  json reply = request("CAS_CHECK", {{"hashes", hashes}});
  std::vector<std::string> missing;
  for (const auto& h : reply.value("missing", json::array()))
    missing.push_back(h.get<std::string>());
  return missing;
}

void ClientSession::cas_put(const Digest& digest, std::string_view bytes, bool manifest) {
  std::string id = fresh_id();
  s_->write_frame(make_frame(id, "CAS_PUT",
                             {{"kind", manifest ? "manifest" : "object"}}));
  s_->write_all(std::string_view(reinterpret_cast<const char*>(digest.bytes.data()),
                                 digest.bytes.size()));
  s_->write_u64be(bytes.size());
  s_->write_all(bytes);
  read_reply(id);
}

std::string ClientSession::submit(const json& spec_doc, const fs::path& workspace,
                                  bundle::Cas& cache, SubmitStats* stats) {
  schema::TaskSpec spec = schema::parse(spec_doc);  // fail fast before any upload
  bundle::BundleManifest manifest = bundle::build_bundle(spec, workspace, cache);

  std::vector<std::string> hashes;
  for (const auto& d : manifest.object_set()) hashes.push_back(d.hex());
  hashes.push_back(manifest.bundle_id.hex());

  for (const auto& hex : cas_check(hashes)) {
    Digest d = Digest::from_hex(hex);
    if (d == manifest.bundle_id) {
      cas_put(d, manifest.canonical_text(), true);
      if (stats) stats->manifest_uploaded = true;
    } else {
      cas_put(d, cache.get(d), false);
      if (stats) ++stats->objects_uploaded;
    }
  }

  json reply = request(
      "SUBMIT", {{"spec_doc", spec_doc}, {"manifest", manifest.bundle_id.hex()}});
  return reply.at("job_id").get<std::string>();
}

uint64_t ClientSession::stream_logs(const std::string& job_id, bool follow, uint64_t since_seq,
                                    const std::function<void(const LogLine&)>& sink) {
  std::string id = fresh_id();
  s_->write_frame(make_frame(
      id, "LOGS", {{"job_id", job_id}, {"follow", follow}, {"since_seq", since_seq}}));
  uint64_t last = since_seq;
  for (;;) {
    Frame f = read_reply(id);
    if (f.type == "LOG") {
      LogLine ln;
      ln.seq = f.payload.at("seq").get<uint64_t>();
      ln.ts = f.payload.at("ts").get<int64_t>();
      ln.rank = f.payload.at("rank").get<int64_t>();
      ln.stream = f.payload.at("stream").get<std::string>();
      ln.line = f.payload.at("line").get<std::string>();
      last = ln.seq;
      sink(ln);
      continue;
    }
    return last;  // the OK eof frame
  }
}

archive::Archive ClientSession::fetch(const std::string& job_id, const std::string& glob) {
  std::string id = fresh_id();
  s_->write_frame(make_frame(id, "FETCH", {{"job_id", job_id}, {"glob", glob}}));
  Frame reply = read_reply(id);
  archive::Archive a;
  a.entries = reply.payload.value("entries", json::array());
  uint64_t len = s_->read_u64be();
  if (len > proto::kMaxBlobBytes) fail(Errc::io_error, "archive frame exceeds the size limit");
  a.blob.resize(len);
  s_->read_exact(a.blob.data(), a.blob.size());
  return a;
}

json ClientSession::status(const std::string& job_id) {
  return request("STATUS", {{"job_id", job_id}});
}

json ClientSession::list(json filter) {
  return request("LIST", {{"filter", std::move(filter)}});
}

json ClientSession::kill(const std::string& job_id) {
  return request("KILL", {{"job_id", job_id}});
}

}  // namespace tacc::tcloud
