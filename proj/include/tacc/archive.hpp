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
#include <string>
#include <vector>

#include "tacc/exec.hpp"
#include "tacc/util.hpp"

namespace tacc::archive {

// The FETCH payload: a JSON entry table plus one binary blob holding the
// file contents back to back, in entry order. Entries are namespaced
// rank<k>/<relative_path> when extracted.
struct Archive {
  json entries = json::array();  // [{rank, path, size, exec}]
  std::string blob;
};

Archive pack(const std::vector<exec::FetchedFile>& files);

std::vector<exec::FetchedFile> unpack(const json& entries, const std::string& blob);

// Writes rank<k>/<path> trees under dest; creates dest if needed.
// Returns the number of files written.
size_t extract(const json& entries, const std::string& blob, const std::filesystem::path& dest);

}  // namespace tacc::archive
