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

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tacc/archive.hpp"
#include "tacc/bundle.hpp"
#include "tacc/errors.hpp"
#include "tacc/protocol.hpp"

namespace tacc::tcloud {

// An error frame sent by the controller, as opposed to one raised locally;
// the CLI maps these to exit 4 and everything local to 2/3.
class ServerError : public Error {
 public:
  using Error::Error;
};

struct ClusterEntry {
  std::string name;
  std::string endpoint;  // host:port or exec:<command>
};

struct ClientConfig {
  std::vector<ClusterEntry> clusters;
  std::string current;

  static ClientConfig from_json(const json& doc);  // throws schema_invalid
  json to_json() const;
  const ClusterEntry* find(const std::string& name) const;
};

// $TCLOUD_CONFIG, else ~/.config/tcloud/config.json
std::filesystem::path default_config_path();
// Missing file reads as an empty config; parse errors still throw.
ClientConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ClientConfig& cfg);

// $TCLOUD_CACHE, else ~/.cache/tcloud/cas — the local chunk store that
// makes resubmits delta-only.
std::filesystem::path cache_cas_root();

struct LogLine {
  uint64_t seq = 0;
  int64_t ts = 0;
  int64_t rank = 0;
  std::string stream;
  std::string line;
};

// One connection, one HELLO, then any number of requests.
class ClientSession {
 public:
  explicit ClientSession(const std::string& endpoint);  // throws io_error
  ~ClientSession();
  ClientSession(const ClientSession&) = delete;
  ClientSession& operator=(const ClientSession&) = delete;

  // Single round trip; throws ServerError when the reply is an ERROR frame.
  json request(const std::string& type, json payload);

  std::vector<std::string> cas_check(const std::vector<std::string>& hashes);
  void cas_put(const Digest& digest, std::string_view bytes, bool manifest);

  struct SubmitStats {
    uint64_t objects_uploaded = 0;
    bool manifest_uploaded = false;
  };
  // Local parse, bundle into `cache`, negotiate the delta, SUBMIT.
  std::string submit(const json& spec_doc, const std::filesystem::path& workspace,
                     bundle::Cas& cache, SubmitStats* stats = nullptr);

  // Returns the last seq seen; runs until the server's eof frame.
  uint64_t stream_logs(const std::string& job_id, bool follow, uint64_t since_seq,
                       const std::function<void(const LogLine&)>& sink);
  archive::Archive fetch(const std::string& job_id, const std::string& glob);

  json status(const std::string& job_id);
  json list(json filter = json::object());
  json kill(const std::string& job_id);

 private:
  std::string fresh_id();
  proto::Frame read_reply(const std::string& id);  // throws ServerError on ERROR
  void close_and_reap();

  std::unique_ptr<proto::FdStream> s_;
  pid_t child_ = -1;  // exec: transport child, reaped in the dtor
  uint64_t next_ = 1;
};

}  // namespace tacc::tcloud
