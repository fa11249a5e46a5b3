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

#include "tacc/joblog.hpp"

#include <chrono>

namespace tacc::joblog {

uint64_t JobLogStore::append(const std::string& job_id, int64_t ts, int64_t rank,
                             std::string stream, std::string text, uint64_t rank_seq) {
  std::lock_guard<std::mutex> lk(mu_);
  Stream& s = streams_[job_id];
  Line line;
  line.seq = s.lines.size() + 1;
  line.ts = ts;
  line.rank = rank;
  line.stream = std::move(stream);
  line.text = std::move(text);
  line.rank_seq = rank_seq;
  s.lines.push_back(std::move(line));
  cv_.notify_all();
  return s.lines.back().seq;
}

std::vector<Line> JobLogStore::read(const std::string& job_id, uint64_t since_seq,
                                    size_t max) const {
  std::lock_guard<std::mutex> lk(mu_);
  std::vector<Line> out;
  auto it = streams_.find(job_id);
  if (it == streams_.end()) return out;
  const auto& lines = it->second.lines;
  for (size_t i = since_seq; i < lines.size(); ++i) {  // seq is 1-based == index+1
    out.push_back(lines[i]);
    if (max && out.size() >= max) break;
  }
  return out;
}

void JobLogStore::mark_terminal(const std::string& job_id) {
  std::lock_guard<std::mutex> lk(mu_);
  streams_[job_id].done = true;
  cv_.notify_all();
}

bool JobLogStore::terminal(const std::string& job_id) const {
  std::lock_guard<std::mutex> lk(mu_);
  auto it = streams_.find(job_id);
  return it != streams_.end() && it->second.done;
}

bool JobLogStore::wait(const std::string& job_id, uint64_t since_seq, int64_t timeout_ms) const {
  std::unique_lock<std::mutex> lk(mu_);
  auto ready = [&] {
    auto it = streams_.find(job_id);
    if (it == streams_.end()) return false;
    return it->second.lines.size() > since_seq || it->second.done;
  };
  return cv_.wait_for(lk, std::chrono::milliseconds(timeout_ms), ready);
}

uint64_t JobLogStore::last_seq(const std::string& job_id) const {
  std::lock_guard<std::mutex> lk(mu_);
  auto it = streams_.find(job_id);
  return it == streams_.end() ? 0 : it->second.lines.size();
}

}  // namespace tacc::joblog
