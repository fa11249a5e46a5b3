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
#include <set>
#include <string>
#include <vector>

#include "tacc/cas.hpp"
#include "tacc/hash.hpp"
#include "tacc/schema.hpp"

namespace tacc::bundle {

// Files above this size are split into fixed-size chunks so an edit to a
// large file only re-uploads the chunks it touched.
constexpr uint64_t kChunkBytes = 4 * 1024 * 1024;

enum class EntryMode { file, exec, dir };

const char* entry_mode_name(EntryMode m);
EntryMode entry_mode_from_name(const std::string& s);

struct Entry {
  std::string path;  // relative, '/'-separated, no leading './'
  EntryMode mode = EntryMode::file;
  uint64_t size = 0;
  std::vector<Digest> chunks;  // empty for dirs and zero-byte files
};

struct BundleManifest {
  Digest bundle_id;  // digest of canonical_text()
  Digest spec_hash;
  std::string entrypoint;
  std::vector<Entry> entries;  // sorted by path

  std::string canonical_text() const;
  json to_json() const;
  static BundleManifest from_text(const std::string& text);  // throws schema_invalid

  // Every distinct object referenced by any entry, sorted.
  std::vector<Digest> object_set() const;
};

// Walks spec.code_root and spec.datasets under workspace_root, chunks
// file contents into the store, and returns the manifest (also stored).
// Rejects symlinks and paths that escape the workspace.
BundleManifest build_bundle(const schema::TaskSpec& spec,
                            const std::filesystem::path& workspace_root, Cas& store);

struct UploadPlan {
  std::vector<std::pair<Digest, uint64_t>> missing_objects;  // sorted by hex
  bool manifest_required = false;
  uint64_t total_bytes = 0;
};

UploadPlan plan_upload(const BundleManifest& manifest, const std::set<Digest>& remote_objects,
                       bool remote_has_manifest);

// target must exist and be empty. exec entries are materialized 0755.
void materialize(const BundleManifest& manifest, const Cas& store,
                 const std::filesystem::path& target);

// Removes every object unreachable from `live` and every stored manifest
// not in `live`. Returns object bytes freed.
uint64_t gc(Cas& store, const std::vector<BundleManifest>& live);

// Inputs to backend selection that are known before anything runs.
struct StaticCharacteristics {
  std::string language_guess;  // "python", "shell", or "" when unknown
  uint64_t bundle_size_bytes = 0;
};

StaticCharacteristics static_characteristics(const schema::TaskSpec& spec,
                                             const BundleManifest& manifest);

}  // namespace tacc::bundle
