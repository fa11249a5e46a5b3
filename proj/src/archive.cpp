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

#include "tacc/archive.hpp"

#include <sys/stat.h>

#include "tacc/errors.hpp"

namespace tacc::archive {

namespace fs = std::filesystem;

Archive pack(const std::vector<exec::FetchedFile>& files) {
  Archive a;
  for (const auto& f : files) {
    a.entries.push_back({{"rank", f.rank},
                         {"path", f.path},
                         {"size", f.content.size()},
                         {"exec", f.exec}});
    a.blob += f.content;
  }
  return a;
}

std::vector<exec::FetchedFile> unpack(const json& entries, const std::string& blob) {
  std::vector<exec::FetchedFile> out;
  size_t off = 0;
  try {
    for (const auto& e : entries) {
      exec::FetchedFile f;
      f.rank = e.at("rank").get<int64_t>();
      f.path = e.at("path").get<std::string>();
      f.exec = e.value("exec", false);
      auto size = e.at("size").get<uint64_t>();
      if (off + size > blob.size()) fail(Errc::protocol_error, "archive blob shorter than entries");
      f.content = blob.substr(off, size);
      off += size;
      out.push_back(std::move(f));
    }
  } catch (const json::exception& ex) {
    fail(Errc::protocol_error, std::string("malformed archive entries: ") + ex.what());
  }
  if (off != blob.size()) fail(Errc::protocol_error, "archive blob longer than entries");
  return out;
}

size_t extract(const json& entries, const std::string& blob, const fs::path& dest) {
  auto files = unpack(entries, blob);
  for (const auto& f : files) {
    fs::path rel = fs::path("rank" + std::to_string(f.rank)) / f.path;
    fs::path target = dest / rel;
    fs::create_directories(target.parent_path());
    write_file(target, f.content);
    if (f.exec) ::chmod(target.c_str(), 0755);
  }
  return files.size();
}

}  // namespace tacc::archive
