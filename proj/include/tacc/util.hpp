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
#include <string>
#include <string_view>

#include <json.hpp>

namespace tacc {

using json = nlohmann::json;

/// Canonical serialization: keys sorted (nlohmann object order), compact,
/// non-ASCII escaped so the byte form is locale- and normalization-free.
std::string canonical_dump(const json& j);

/// File form of the above: canonical text plus one trailing LF.
std::string canonical_text(const json& j);

std::string read_file(const std::filesystem::path& p);          // throws Error(io_error)
void write_file(const std::filesystem::path& p, std::string_view data);
void write_file_atomic(const std::filesystem::path& p, std::string_view data);

/// Shell-style glob match over slash-separated relative paths
/// ('*' does not cross '/').
bool glob_match(const std::string& pattern, const std::string& path);

int64_t wall_now_s();
int64_t mono_now_ms();

}  // namespace tacc
