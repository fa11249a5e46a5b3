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

#include "tacc/bundle.hpp"

#include <algorithm>
#include <map>

#include "tacc/errors.hpp"
#include "tacc/util.hpp"

namespace fs = std::filesystem;

namespace tacc::bundle {

namespace {

// Normalizes a path relative to the workspace root and rejects escapes.
// The result uses '/' separators with no leading "./".
std::string normalize_rel(const fs::path& rel) {
  fs::path norm = rel.lexically_normal();
  std::string s = norm.generic_string();
  if (s == ".") return "";
  if (s == ".." || s.starts_with("../") || norm.is_absolute())
    fail(Errc::schema_invalid, "path '" + rel.generic_string() + "' escapes the workspace");
  return s;
}

struct Walker {
  const fs::path& root;
  Cas& store;
  // keyed by normalized path so overlapping roots (code_root ".", dataset
  // "data") collapse to one entry each
  std::map<std::string, Entry>& entries;

  void add_tree(const std::string& rel) {
    fs::path abs = rel.empty() ? root : root / rel;
    std::error_code ec;
    auto st = fs::symlink_status(abs, ec);
    if (ec || st.type() == fs::file_type::not_found)
      fail(Errc::io_error, "path '" + (rel.empty() ? "." : rel) + "' does not exist");
    add(abs, rel, st);
  }

  void add(const fs::path& abs, const std::string& rel, const fs::file_status& st) {
    if (fs::is_symlink(st))
      fail(Errc::io_error, "symlink '" + rel + "' is not allowed in a bundle");
    if (fs::is_directory(st)) {
      if (!rel.empty()) {  // the workspace root itself is implicit
        Entry e{rel, EntryMode::dir, 0, {}};
        entries.emplace(rel, std::move(e));
      }
      std::vector<fs::directory_entry> kids;
      for (const auto& de : fs::directory_iterator(abs)) kids.push_back(de);
      std::sort(kids.begin(), kids.end(),
                [](const auto& a, const auto& b) { return a.path().filename() < b.path().filename(); });
      for (const auto& de : kids) {
        std::string kid_rel = rel.empty() ? de.path().filename().string()
                                          : rel + "/" + de.path().filename().string();
        add(de.path(), kid_rel, de.symlink_status());
      }
      return;
    }
    if (!fs::is_regular_file(st))
      fail(Errc::io_error, "'" + rel + "' is neither a regular file nor a directory");

    Entry e;
    e.path = rel;
    auto perms = st.permissions();
    e.mode = (perms & fs::perms::owner_exec) != fs::perms::none ? EntryMode::exec : EntryMode::file;
    std::string bytes = read_file(abs);
    e.size = bytes.size();
    for (uint64_t off = 0; off < bytes.size(); off += kChunkBytes) {
      uint64_t len = std::min<uint64_t>(kChunkBytes, bytes.size() - off);
      e.chunks.push_back(store.put(std::string_view(bytes).substr(off, len)));
    }
    entries.emplace(rel, std::move(e));
  }
};

}  // namespace

const char* entry_mode_name(EntryMode m) {
  switch (m) {
    case EntryMode::file: return "file";
    case EntryMode::exec: return "exec";
    case EntryMode::dir: return "dir";
  }
  return "file";
}

EntryMode entry_mode_from_name(const std::string& s) {
  if (s == "file") return EntryMode::file;
  if (s == "exec") return EntryMode::exec;
  if (s == "dir") return EntryMode::dir;
  fail(Errc::schema_invalid, "unknown entry mode '" + s + "'", "entries.mode");
}

json BundleManifest::to_json() const {
  json doc;
  doc["spec_hash"] = spec_hash.hex();
  doc["entrypoint"] = entrypoint;
  json list = json::array();
  for (const auto& e : entries) {
    json chunks = json::array();
    for (const auto& c : e.chunks) chunks.push_back(c.hex());
    list.push_back({{"path", e.path},
                    {"mode", entry_mode_name(e.mode)},
                    {"size", e.size},
                    {"chunks", std::move(chunks)}});
  }
  doc["entries"] = std::move(list);
  return doc;
}

std::string BundleManifest::canonical_text() const { return tacc::canonical_text(to_json()); }

BundleManifest BundleManifest::from_text(const std::string& text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object())
    fail(Errc::schema_invalid, "manifest is not a JSON object");
  BundleManifest m;
  try {
    m.spec_hash = Digest::from_hex(doc.at("spec_hash").get<std::string>());
    m.entrypoint = doc.at("entrypoint").get<std::string>();
    for (const auto& je : doc.at("entries")) {
      Entry e;
      e.path = je.at("path").get<std::string>();
      e.mode = entry_mode_from_name(je.at("mode").get<std::string>());
      e.size = je.at("size").get<uint64_t>();
      for (const auto& c : je.at("chunks")) e.chunks.push_back(Digest::from_hex(c.get<std::string>()));
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    fail(Errc::schema_invalid, std::string("malformed manifest: ") + ex.what());
  }
  m.bundle_id = sha256(m.canonical_text());
  return m;
}

std::vector<Digest> BundleManifest::object_set() const {
  std::set<Digest> s;
  for (const auto& e : entries) s.insert(e.chunks.begin(), e.chunks.end());
  return {s.begin(), s.end()};
}

BundleManifest build_bundle(const schema::TaskSpec& spec, const fs::path& workspace_root,
                            Cas& store) {
  std::map<std::string, Entry> entries;
  Walker w{workspace_root, store, entries};
  w.add_tree(normalize_rel(spec.code_root));
  for (const auto& d : spec.datasets) w.add_tree(normalize_rel(d));

  BundleManifest m;
  m.spec_hash = schema::spec_hash(spec);
  m.entrypoint = spec.entrypoint;
  for (auto& [_, e] : entries) m.entries.push_back(std::move(e));

  std::string text = m.canonical_text();
  m.bundle_id = store.put_manifest(text);
  return m;
}

UploadPlan plan_upload(const BundleManifest& manifest, const std::set<Digest>& remote_objects,
                       bool remote_has_manifest) {
  UploadPlan plan;
  for (const auto& id : manifest.object_set()) {
    if (remote_objects.count(id)) continue;
    // chunk size is recoverable from the entry table; scan for it
    uint64_t size = 0;
    for (const auto& e : manifest.entries) {
      for (size_t i = 0; i < e.chunks.size(); ++i) {
        if (e.chunks[i] == id) {
          uint64_t off = static_cast<uint64_t>(i) * kChunkBytes;
          size = std::min<uint64_t>(kChunkBytes, e.size - off);
        }
      }
    }
    plan.missing_objects.emplace_back(id, size);
    plan.total_bytes += size;
  }
  plan.manifest_required = !remote_has_manifest;
  return plan;
}

void materialize(const BundleManifest& manifest, const Cas& store, const fs::path& target) {
  std::error_code ec;
  if (!fs::is_directory(target, ec))
    fail(Errc::io_error, "target '" + target.string() + "' is not a directory");
  if (!fs::is_empty(target, ec))
    fail(Errc::io_error, "target '" + target.string() + "' is not empty");

  for (const auto& e : manifest.entries) {
    fs::path dest = target / e.path;
    if (e.mode == EntryMode::dir) {
      fs::create_directories(dest, ec);
      if (ec) fail(Errc::io_error, "cannot create directory " + dest.string());
      continue;
    }
    fs::create_directories(dest.parent_path(), ec);
    std::string bytes;
    bytes.reserve(e.size);
    for (const auto& c : e.chunks) bytes += store.get(c);
    if (bytes.size() != e.size)
      fail(Errc::io_error, "entry '" + e.path + "' size mismatch on materialize");
    write_file(dest, bytes);
    fs::permissions(dest,
                    e.mode == EntryMode::exec
                        ? fs::perms::owner_all | fs::perms::group_read | fs::perms::group_exec |
                              fs::perms::others_read | fs::perms::others_exec
                        : fs::perms::owner_read | fs::perms::owner_write | fs::perms::group_read |
                              fs::perms::others_read,
                    ec);
  }
}

uint64_t gc(Cas& store, const std::vector<BundleManifest>& live) {
  std::set<Digest> reachable;
  std::set<Digest> live_manifests;
  for (const auto& m : live) {
    live_manifests.insert(m.bundle_id);
    for (const auto& id : m.object_set()) reachable.insert(id);
  }
  uint64_t freed = 0;
  for (const auto& id : store.objects()) {
    if (reachable.count(id)) continue;
    freed += store.size_of(id).value_or(0);
    store.remove(id);
  }
  for (const auto& id : store.manifests())
    if (!live_manifests.count(id)) store.remove_manifest(id);
  return freed;
}

StaticCharacteristics static_characteristics(const schema::TaskSpec& spec,
                                             const BundleManifest& manifest) {
  StaticCharacteristics c;
  for (const auto& e : manifest.entries) c.bundle_size_bytes += e.size;

  // Cheap token heuristic over the entrypoint; backends only use this as a
  // capability hint, so "unknown" is an acceptable answer.
  std::string head = spec.entrypoint.substr(0, spec.entrypoint.find(' '));
  auto base = fs::path(head).filename().string();
  if (base.starts_with("python")) c.language_guess = "python";
  else if (base == "sh" || base == "bash" || base.ends_with(".sh")) c.language_guess = "shell";
  else if (spec.entrypoint.find(".py") != std::string::npos) c.language_guess = "python";
  return c;
}

}  // namespace tacc::bundle
