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
#include <optional>
#include <string>
#include <vector>

#include "tacc/hash.hpp"

namespace tacc::bundle {

// Content-addressed object store. Layout:
//   <root>/objects/<first 2 hex>/<remaining 62 hex>
//   <root>/manifests/<64 hex>.json
// Object writes are write-temp-then-rename, so concurrent writers of the
// same content race benignly and readers never observe partial objects.
class Cas {
 public:
  explicit Cas(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  Digest put(std::string_view bytes);
  bool has(const Digest& id) const;
  // Throws missing_object; verifies bytes against the digest on read.
  std::string get(const Digest& id) const;
  std::optional<uint64_t> size_of(const Digest& id) const;
  std::vector<Digest> objects() const;  // sorted by hex
  void remove(const Digest& id);

  // Manifests live beside objects and are addressed by the digest of
  // their canonical text.
  Digest put_manifest(std::string_view canonical_text);
  bool has_manifest(const Digest& id) const;
  std::string manifest_text(const Digest& id) const;  // throws missing_object
  std::vector<Digest> manifests() const;              // sorted by hex
  void remove_manifest(const Digest& id);

 private:
  std::filesystem::path object_path(const Digest& id) const;
  std::filesystem::path manifest_path(const Digest& id) const;

  std::filesystem::path root_;
};

}  // namespace tacc::bundle
