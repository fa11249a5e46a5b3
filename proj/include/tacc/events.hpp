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
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "tacc/util.hpp"

namespace tacc::controld {

enum class EventKind {
  submitted,
  compile_started,
  compiled,
  enqueued,
  decision_applied,
  provision_started,
  provisioned,
  provision_failed,
  rank_started,
  rank_exited,
  suspended,
  resumed,
  preempted,
  killed,
  gang_changed,
  backend_health,
  usage_decayed,
};

constexpr EventKind kAllEventKinds[] = {
    EventKind::submitted,      EventKind::compile_started, EventKind::compiled,
    EventKind::enqueued,       EventKind::decision_applied, EventKind::provision_started,
    EventKind::provisioned,    EventKind::provision_failed, EventKind::rank_started,
    EventKind::rank_exited,    EventKind::suspended,        EventKind::resumed,
    EventKind::preempted,      EventKind::killed,           EventKind::gang_changed,
    EventKind::backend_health, EventKind::usage_decayed,
};

const char* event_kind_name(EventKind k);
EventKind event_kind_from_name(const std::string& s);  // throws schema_invalid

struct Event {
  uint64_t seq = 0;
  int64_t t = 0;        // seconds (virtual under the simulated clock)
  std::string job_id;   // empty for system-scoped events
  EventKind kind = EventKind::submitted;
  json payload;

  json to_json() const;
  static Event from_json(const json& doc);  // throws schema_invalid
};

// Record framing: 4-byte big-endian payload length, payload (canonical
// JSON of the event), 4-byte big-endian CRC32 of the payload.
std::string encode_record(const Event& e);

struct ReadResult {
  std::vector<Event> events;
  // Set when the tail failed framing/CRC/decoding; the seq the next
  // record would have carried. Events hold the valid prefix.
  std::optional<uint64_t> corrupt_at_seq;
};

ReadResult read_log(const std::filesystem::path& file);

// Append-only writer; one instance per live controller.
class EventLog {
 public:
  explicit EventLog(std::filesystem::path file);  // creates if absent

  void append(const Event& e);  // throws io_error
  const std::filesystem::path& file() const { return file_; }

 private:
  std::filesystem::path file_;
  std::ofstream out_;
};

}  // namespace tacc::controld
