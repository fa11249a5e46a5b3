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

#include "tacc/cas.hpp"

#include <algorithm>

#include "tacc/errors.hpp"
#include "tacc/util.hpp"

namespace fs = std::filesystem;

namespace tacc::bundle {

Cas::Cas(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_ / "objects", ec);
  fs::create_directories(root_ / "manifests", ec);
  if (ec) fail(Errc::io_error, "cannot create store at " + root_.string());
}

fs::path Cas::object_path(const Digest& id) const {
  std::string hex = id.hex();
  return root_ / "objects" / hex.substr(0, 2) / hex.substr(2);
}

fs::path Cas::manifest_path(const Digest& id) const {
  return root_ / "manifests" / (id.hex() + ".json");
}

Digest Cas::put(std::string_view bytes) {
  Digest id = sha256(bytes);
  fs::path p = object_path(id);
  if (!fs::exists(p)) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    write_file_atomic(p, bytes);
  }
  return id;
}

bool Cas::has(const Digest& id) const { return fs::exists(object_path(id)); }

std::string Cas::get(const Digest& id) const {
  fs::path p = object_path(id);
  if (!fs::exists(p)) fail(Errc::missing_object, "object " + id.hex() + " not in store");
  std::string bytes = read_file(p);
  if (sha256(bytes) != id)
    fail(Errc::io_error, "object " + id.hex() + " is corrupt on disk");
  return bytes;
}

std::optional<uint64_t> Cas::size_of(const Digest& id) const {
  std::error_code ec;
  auto n = fs::file_size(object_path(id), ec);
  if (ec) return std::nullopt;
  return n;
}

std::vector<Digest> Cas::objects() const {
  std::vector<Digest> out;
  std::error_code ec;
  for (const auto& dir : fs::directory_iterator(root_ / "objects", ec)) {
    if (!dir.is_directory()) continue;
    for (const auto& f : fs::directory_iterator(dir.path())) {
      std::string hex = dir.path().filename().string() + f.path().filename().string();
      if (hex.size() == 64) out.push_back(Digest::from_hex(hex));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void Cas::remove(const Digest& id) {
  std::error_code ec;
  fs::remove(object_path(id), ec);
}

Digest Cas::put_manifest(std::string_view canonical_text) {
  Digest id = sha256(canonical_text);
  fs::path p = manifest_path(id);
  if (!fs::exists(p)) write_file_atomic(p, canonical_text);
  return id;
}

bool Cas::has_manifest(const Digest& id) const { return fs::exists(manifest_path(id)); }

std::string Cas::manifest_text(const Digest& id) const {
  fs::path p = manifest_path(id);
  if (!fs::exists(p)) fail(Errc::missing_object, "manifest " + id.hex() + " not in store");
  return read_file(p);
}

std::vector<Digest> Cas::manifests() const {
  std::vector<Digest> out;
  std::error_code ec;
  for (const auto& f : fs::directory_iterator(root_ / "manifests", ec)) {
    std::string name = f.path().filename().string();
    if (name.size() == 69 && name.ends_with(".json"))
      out.push_back(Digest::from_hex(name.substr(0, 64)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void Cas::remove_manifest(const Digest& id) {
  std::error_code ec;
  fs::remove(manifest_path(id), ec);
}

}  // namespace tacc::bundle
