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

#include "tacc/schema.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "tacc/errors.hpp"

namespace tacc::schema {

namespace {

constexpr int64_t kMaxNameLen = 128;
constexpr int64_t kWalltimeWarnThresholdS = 7 * 24 * 3600;

[[noreturn]] void invalid(const std::string& field, const std::string& msg) {
  fail(Errc::schema_invalid, msg, field);
}

int64_t require_int(const json& v, const std::string& field) {
  // Floats are rejected even when integral: a spec is a written artifact
  // and 2.0 cpus is a symptom of a generator bug, not a request.
  if (!v.is_number_integer() && !v.is_number_unsigned())
    invalid(field, "expected an integer");
  return v.get<int64_t>();
}

std::string require_string(const json& v, const std::string& field) {
  if (!v.is_string()) invalid(field, "expected a string");
  return v.get<std::string>();
}

std::vector<std::string> require_string_array(const json& v, const std::string& field) {
  if (!v.is_array()) invalid(field, "expected an array of strings");
  std::vector<std::string> out;
  out.reserve(v.size());
  size_t idx = 0;
  for (const auto& e : v) {
    if (!e.is_string())
      invalid(field + "[" + std::to_string(idx) + "]", "expected a string");
    out.push_back(e.get<std::string>());
    ++idx;
  }
  return out;
}

bool valid_env_key(const std::string& k) {
  if (k.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(k[0])) || k[0] == '_')) return false;
  return std::all_of(k.begin() + 1, k.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  });
}

ResourceReq parse_resources(const json& v) {
  if (!v.is_object()) invalid("resources", "expected an object");
  static const std::set<std::string> known = {"cpus", "gpus", "mem_mib"};
  for (const auto& [k, _] : v.items())
    if (!known.count(k)) invalid("resources." + k, "unknown field");

  ResourceReq r;
  if (!v.contains("cpus")) invalid("resources.cpus", "missing required field");
  r.cpus = require_int(v.at("cpus"), "resources.cpus");
  if (r.cpus < 1) invalid("resources.cpus", "must be >= 1");

  if (v.contains("gpus")) {
    r.gpus = require_int(v.at("gpus"), "resources.gpus");
    if (r.gpus < 0) invalid("resources.gpus", "must be >= 0");
  }

  if (!v.contains("mem_mib")) invalid("resources.mem_mib", "missing required field");
  r.mem_mib = require_int(v.at("mem_mib"), "resources.mem_mib");
  if (r.mem_mib < 1) invalid("resources.mem_mib", "must be >= 1");
  return r;
}

}  // namespace

const char* qos_name(Qos q) {
  switch (q) {
    case Qos::high: return "high";
    case Qos::normal: return "normal";
    case Qos::preemptible: return "preemptible";
  }
  return "normal";
}

Qos qos_from_name(const std::string& s) {
  if (s == "high") return Qos::high;
  if (s == "normal") return Qos::normal;
  if (s == "preemptible") return Qos::preemptible;
  fail(Errc::schema_invalid, "unknown qos '" + s + "'", "qos");
}

double qos_norm(Qos q) {
  switch (q) {
    case Qos::high: return 1.0;
    case Qos::normal: return 0.5;
    case Qos::preemptible: return 0.0;
  }
  return 0.5;
}

TaskSpec parse(const json& doc) {
  if (!doc.is_object()) fail(Errc::schema_invalid, "task document must be an object");

  static const std::set<std::string> known = {
      "name",         "user",     "resources",          "qos",
      "code_root",    "entrypoint", "datasets",         "dependencies",
      "env",          "runtime_preference", "walltime_estimate_s", "nodes"};
  for (const auto& [k, _] : doc.items())
    if (!known.count(k)) invalid(k, "unknown field");

  TaskSpec s;

  if (!doc.contains("name")) invalid("name", "missing required field");
  s.name = require_string(doc.at("name"), "name");
  if (s.name.empty()) invalid("name", "must be non-empty");
  if (static_cast<int64_t>(s.name.size()) > kMaxNameLen)
    invalid("name", "exceeds " + std::to_string(kMaxNameLen) + " bytes");

  if (!doc.contains("user")) invalid("user", "missing required field");
  s.user = require_string(doc.at("user"), "user");
  if (s.user.empty()) invalid("user", "must be non-empty");

  if (!doc.contains("resources")) invalid("resources", "missing required field");
  s.resources = parse_resources(doc.at("resources"));

  if (doc.contains("qos")) s.qos = qos_from_name(require_string(doc.at("qos"), "qos"));

  if (doc.contains("code_root")) {
    s.code_root = require_string(doc.at("code_root"), "code_root");
    if (s.code_root.empty()) invalid("code_root", "must be non-empty");
  }

  if (!doc.contains("entrypoint")) invalid("entrypoint", "missing required field");
  s.entrypoint = require_string(doc.at("entrypoint"), "entrypoint");
  if (s.entrypoint.empty()) invalid("entrypoint", "must be non-empty");

  if (doc.contains("datasets")) s.datasets = require_string_array(doc.at("datasets"), "datasets");
  if (doc.contains("dependencies"))
    s.dependencies = require_string_array(doc.at("dependencies"), "dependencies");

  if (doc.contains("env")) {
    const auto& e = doc.at("env");
    if (!e.is_object()) invalid("env", "expected an object");
    for (const auto& [k, v] : e.items()) {
      if (!valid_env_key(k)) invalid("env." + k, "invalid environment variable name");
      if (!v.is_string()) invalid("env." + k, "expected a string");
      s.env[k] = v.get<std::string>();
    }
  }

  if (doc.contains("runtime_preference")) {
    s.runtime_preference =
        require_string_array(doc.at("runtime_preference"), "runtime_preference");
    std::set<std::string> seen;
    for (const auto& b : s.runtime_preference)
      if (!seen.insert(b).second)
        invalid("runtime_preference", "duplicate backend '" + b + "'");
  }

  if (doc.contains("walltime_estimate_s")) {
    s.walltime_estimate_s = require_int(doc.at("walltime_estimate_s"), "walltime_estimate_s");
    if (s.walltime_estimate_s < 1) invalid("walltime_estimate_s", "must be >= 1");
  }

  if (doc.contains("nodes")) {
    s.nodes = require_int(doc.at("nodes"), "nodes");
    if (s.nodes < 1) invalid("nodes", "must be >= 1");
  }

  return s;
}

TaskSpec parse_text(const std::string& text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) fail(Errc::schema_invalid, "malformed JSON");
  return parse(doc);
}

json to_canonical_json(const TaskSpec& spec) {
  json doc;
  doc["name"] = spec.name;
  doc["user"] = spec.user;
  doc["resources"] = {{"cpus", spec.resources.cpus},
                      {"gpus", spec.resources.gpus},
                      {"mem_mib", spec.resources.mem_mib}};
  doc["qos"] = qos_name(spec.qos);
  doc["code_root"] = spec.code_root;
  doc["entrypoint"] = spec.entrypoint;
  doc["datasets"] = spec.datasets;
  doc["dependencies"] = spec.dependencies;
  doc["env"] = spec.env;
  // "no preference" is canonically the absent key, so an explicit empty
  // list and a missing one hash identically.
  if (!spec.runtime_preference.empty()) doc["runtime_preference"] = spec.runtime_preference;
  doc["walltime_estimate_s"] = spec.walltime_estimate_s;
  doc["nodes"] = spec.nodes;
  return doc;
}

std::string canonicalize(const TaskSpec& spec) { return canonical_text(to_canonical_json(spec)); }

Digest spec_hash(const TaskSpec& spec) { return sha256(canonicalize(spec)); }

ValidationReport validate(const TaskSpec& spec, const ClusterLimits& limits) {
  ValidationReport rep;
  auto err = [&](std::string field, std::string msg) {
    rep.issues.push_back({Issue::Severity::error, std::move(field), "UNSATISFIABLE", std::move(msg)});
  };

  if (!spec.resources.fits_in(limits.max_node)) {
    if (spec.resources.cpus > limits.max_node.cpus)
      err("resources.cpus", "request exceeds largest node (" +
                                std::to_string(limits.max_node.cpus) + " cpus)");
    if (spec.resources.gpus > limits.max_node.gpus)
      err("resources.gpus", "request exceeds largest node (" +
                                std::to_string(limits.max_node.gpus) + " gpus)");
    if (spec.resources.mem_mib > limits.max_node.mem_mib)
      err("resources.mem_mib", "request exceeds largest node (" +
                                   std::to_string(limits.max_node.mem_mib) + " MiB)");
  }
  if (spec.nodes > limits.node_count)
    err("nodes", "cluster has only " + std::to_string(limits.node_count) + " nodes");

  ResourceReq total{spec.resources.cpus * spec.nodes, spec.resources.gpus * spec.nodes,
                    spec.resources.mem_mib * spec.nodes};
  if (!total.fits_in(limits.total)) {
    if (total.cpus > limits.total.cpus) err("resources.cpus", "aggregate request exceeds cluster");
    if (total.gpus > limits.total.gpus) err("resources.gpus", "aggregate request exceeds cluster");
    if (total.mem_mib > limits.total.mem_mib)
      err("resources.mem_mib", "aggregate request exceeds cluster");
  }

  if (spec.walltime_estimate_s > kWalltimeWarnThresholdS)
    rep.issues.push_back({Issue::Severity::warning, "walltime_estimate_s", "LONG_WALLTIME",
                          "estimate exceeds seven days; scheduling latency may suffer"});

  return rep;
}

void validate_or_throw(const TaskSpec& spec, const ClusterLimits& limits) {
  auto rep = validate(spec, limits);
  for (const auto& i : rep.issues)
    if (i.severity == Issue::Severity::error)
      fail(errc_from_name(i.code), i.message, i.field);
}

}  // namespace tacc::schema
