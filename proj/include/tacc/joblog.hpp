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

#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace tacc::joblog {

struct Line {
  uint64_t seq = 0;  // job-wide, 1-based, gapless
  int64_t ts = 0;
  int64_t rank = 0;
  std::string stream;
  std::string text;
  uint64_t rank_seq = 0;
};

// Merged per-job log storage. Lines arrive already ordered by
// (timestamp, rank, per-rank seq) — the backend drain order — so the
// append sequence is the merge order and `seq` makes it resumable.
class JobLogStore {
 public:
  uint64_t append(const std::string& job_id, int64_t ts, int64_t rank, std::string stream,
                  std::string text, uint64_t rank_seq);

  // Lines with seq > since_seq, up to max (0 = all).
  std::vector<Line> read(const std::string& job_id, uint64_t since_seq, size_t max = 0) const;

  // Marks the job's stream complete; wakes any followers.
  void mark_terminal(const std::string& job_id);
  bool terminal(const std::string& job_id) const;

  // Blocks until a line with seq > since_seq exists, the stream is
  // terminal, or timeout_ms passes. Returns true when there is anything
  // new to read (or the stream just ended).
  bool wait(const std::string& job_id, uint64_t since_seq, int64_t timeout_ms) const;

  uint64_t last_seq(const std::string& job_id) const;

 private:
  struct Stream {
    std::vector<Line> lines;
    bool done = false;
  };

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::map<std::string, Stream> streams_;
};

}  // namespace tacc::joblog
