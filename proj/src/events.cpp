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

#include "tacc/events.hpp"

#include "tacc/errors.hpp"
#include "tacc/hash.hpp"

namespace fs = std::filesystem;

namespace tacc::controld {

namespace {

void put_be32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

uint32_t get_be32(const char* p) {
  return (static_cast<uint32_t>(static_cast<unsigned char>(p[0])) << 24) |
         (static_cast<uint32_t>(static_cast<unsigned char>(p[1])) << 16) |
         (static_cast<uint32_t>(static_cast<unsigned char>(p[2])) << 8) |
         static_cast<uint32_t>(static_cast<unsigned char>(p[3]));
}

constexpr uint32_t kMaxRecordBytes = 64 * 1024 * 1024;

}  // namespace

const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::submitted: return "submitted";
    case EventKind::compile_started: return "compile_started";
    case EventKind::compiled: return "compiled";
    case EventKind::enqueued: return "enqueued";
    case EventKind::decision_applied: return "decision_applied";
    case EventKind::provision_started: return "provision_started";
    case EventKind::provisioned: return "provisioned";
    case EventKind::provision_failed: return "provision_failed";
    case EventKind::rank_started: return "rank_started";
    case EventKind::rank_exited: return "rank_exited";
    case EventKind::suspended: return "suspended";
    case EventKind::resumed: return "resumed";
    case EventKind::preempted: return "preempted";
    case EventKind::killed: return "killed";
    case EventKind::gang_changed: return "gang_changed";
    case EventKind::backend_health: return "backend_health";
    case EventKind::usage_decayed: return "usage_decayed";
  }
  return "unknown";
}

EventKind event_kind_from_name(const std::string& s) {
  for (EventKind k : kAllEventKinds)
    if (s == event_kind_name(k)) return k;
  fail(Errc::schema_invalid, "unknown event kind '" + s + "'");
}

json Event::to_json() const {
  return {{"seq", seq},
          {"t", t},
          {"job_id", job_id},
          {"kind", event_kind_name(kind)},
          {"payload", payload}};
}

Event Event::from_json(const json& doc) {
  Event e;
  try {
    e.seq = doc.at("seq").get<uint64_t>();
    e.t = doc.at("t").get<int64_t>();
    e.job_id = doc.at("job_id").get<std::string>();
    e.kind = event_kind_from_name(doc.at("kind").get<std::string>());
    e.payload = doc.at("payload");
  } catch (const json::exception& ex) {
    fail(Errc::schema_invalid, std::string("malformed event: ") + ex.what());
  }
  return e;
}

std::string encode_record(const Event& e) {
  std::string payload = canonical_dump(e.to_json());
  std::string out;
  out.reserve(payload.size() + 8);
  put_be32(out, static_cast<uint32_t>(payload.size()));
  out += payload;
  put_be32(out, crc32_of(payload));
  return out;
}

ReadResult read_log(const fs::path& file) {
  ReadResult res;
  std::string bytes;
  if (fs::exists(file)) bytes = read_file(file);

  size_t off = 0;
  uint64_t next_seq = 1;
  while (off < bytes.size()) {
    if (off + 4 > bytes.size()) {
      res.corrupt_at_seq = next_seq;
      break;
    }
    uint32_t len = get_be32(bytes.data() + off);
    if (len > kMaxRecordBytes || off + 4 + len + 4 > bytes.size()) {
      res.corrupt_at_seq = next_seq;
      break;
    }
    std::string_view payload(bytes.data() + off + 4, len);
    uint32_t crc = get_be32(bytes.data() + off + 4 + len);
    if (crc32_of(payload) != crc) {
      res.corrupt_at_seq = next_seq;
      break;
    }
    json doc = json::parse(payload, nullptr, false);
    if (doc.is_discarded()) {
      res.corrupt_at_seq = next_seq;
      break;
    }
    Event e;
    try {
      e = Event::from_json(doc);
    } catch (const Error&) {
      res.corrupt_at_seq = next_seq;
      break;
    }
    res.events.push_back(std::move(e));
    next_seq = res.events.back().seq + 1;
    off += 4 + len + 4;
  }
  return res;
}

EventLog::EventLog(fs::path file) : file_(std::move(file)) {
  std::error_code ec;
  if (file_.has_parent_path()) fs::create_directories(file_.parent_path(), ec);
  out_.open(file_, std::ios::binary | std::ios::app);
  if (!out_) fail(Errc::io_error, "cannot open event log " + file_.string());
}

void EventLog::append(const Event& e) {
  std::string rec = encode_record(e);
  out_.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  out_.flush();
  if (!out_) fail(Errc::io_error, "event log write failed");
}

}  // namespace tacc::controld
