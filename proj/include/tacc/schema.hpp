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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tacc/hash.hpp"
#include "tacc/util.hpp"

namespace tacc::schema {

// Per-node resource request. mem_mib is resident memory, not address space.
struct ResourceReq {
  int64_t cpus = 0;
  int64_t gpus = 0;
  int64_t mem_mib = 0;

  bool fits_in(const ResourceReq& cap) const {
    return cpus <= cap.cpus && gpus <= cap.gpus && mem_mib <= cap.mem_mib;
  }
  ResourceReq& operator+=(const ResourceReq& o) {
    cpus += o.cpus;
    gpus += o.gpus;
    mem_mib += o.mem_mib;
    return *this;
  }
  ResourceReq& operator-=(const ResourceReq& o) {
    cpus -= o.cpus;
    gpus -= o.gpus;
    mem_mib -= o.mem_mib;
    return *this;
  }
  friend ResourceReq operator+(ResourceReq a, const ResourceReq& b) { return a += b; }
  friend ResourceReq operator-(ResourceReq a, const ResourceReq& b) { return a -= b; }
  auto operator<=>(const ResourceReq&) const = default;
};

enum class Qos { high, normal, preemptible };

const char* qos_name(Qos q);
Qos qos_from_name(const std::string& s);  // throws schema_invalid
double qos_norm(Qos q);                   // high 1.0, normal 0.5, preemptible 0.0

// A fully-defaulted task specification. Field set is closed: parse()
// rejects anything it does not recognize.
struct TaskSpec {
  std::string name;
  std::string user;
  ResourceReq resources;
  Qos qos = Qos::normal;
  std::string code_root = ".";
  std::string entrypoint;
  std::vector<std::string> datasets;
  std::vector<std::string> dependencies;
  std::map<std::string, std::string> env;
  std::vector<std::string> runtime_preference;  // empty means "no preference"
  int64_t walltime_estimate_s = 3600;
  int64_t nodes = 1;
};

// Parses and validates a task document. Error paths use dotted field
// names ("resources.cpus") so callers can surface them directly.
TaskSpec parse(const json& doc);
TaskSpec parse_text(const std::string& text);

// Canonical form: every defaulted field made explicit, keys sorted,
// no insignificant whitespace, single trailing newline. The spec hash
// is the SHA-256 of these bytes.
json to_canonical_json(const TaskSpec& spec);
std::string canonicalize(const TaskSpec& spec);
Digest spec_hash(const TaskSpec& spec);

struct ClusterLimits {
  ResourceReq max_node;   // largest single node, per dimension
  ResourceReq total;      // sum over all nodes
  int64_t node_count = 0;
};

struct Issue {
  enum class Severity { error, warning };
  Severity severity = Severity::error;
  std::string field;
  std::string code;  // an Errc name, e.g. "UNSATISFIABLE"
  std::string message;
};

struct ValidationReport {
  std::vector<Issue> issues;
  bool ok() const {
    for (const auto& i : issues)
      if (i.severity == Issue::Severity::error) return false;
    return true;
  }
};

// Feasibility check against cluster shape. Does not consider current
// load, only whether the request could ever be placed.
ValidationReport validate(const TaskSpec& spec, const ClusterLimits& limits);

// Throws unsatisfiable/schema_invalid on the first error issue.
void validate_or_throw(const TaskSpec& spec, const ClusterLimits& limits);

}  // namespace tacc::schema
