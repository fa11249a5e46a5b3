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
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tacc/bundle.hpp"
#include "tacc/sched.hpp"
#include "tacc/schema.hpp"

namespace tacc::exec {

struct BackendDescriptor {
  std::string name;
  std::string kind;  // "simulated" or "local_process"
  sched::ResourceReq max_per_node;  // largest per-node request it accepts
  std::set<std::string> features;
};

struct ProvisionRequest {
  std::string job_id;
  bundle::BundleManifest manifest;
  sched::Placement placement;  // node -> per-node request; rank order = key order
  std::map<std::string, std::string> env;
  std::string entrypoint;
  int64_t now_s = 0;
};

struct TaskEvent {
  enum class Kind { started, log_line, exited, failed };
  Kind kind = Kind::started;
  std::string job_id;
  int64_t rank = 0;
  int64_t t = 0;
  uint64_t rank_seq = 0;  // monotonic per (job, rank)
  std::string stream;     // "stdout" or "stderr" for log_line
  std::string text;
  int64_t exit_code = 0;
  std::string cause;  // for failed
};

// Consumed-resource report for usage accounting; covers the run interval
// since the last provision/resume.
struct StopAck {
  int64_t active_s = 0;
  double cpu_s = 0;
  double gpu_s = 0;
};

struct FetchedFile {
  int64_t rank = 0;
  std::string path;  // relative to the rank working directory
  std::string content;
  bool exec = false;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual const BackendDescriptor& descriptor() const = 0;

  // Returns one runner id per rank; throws provision_failed.
  virtual std::vector<std::string> provision(const ProvisionRequest& req) = 0;
  // Pending events across all jobs, ordered by (t, job, rank, rank_seq).
  virtual std::vector<TaskEvent> drain_events() = 0;
  // Stops all ranks (preempt or kill). Already-exited ranks are no-ops.
  virtual StopAck stop(const std::string& job_id, int64_t grace_s, int64_t now_s) = 0;
  virtual StopAck suspend(const std::string& job_id, int64_t now_s) = 0;
  virtual void resume(const std::string& job_id, int64_t now_s) = 0;
  virtual std::vector<FetchedFile> fetch(const std::string& job_id, const std::string& glob) = 0;
  virtual bool has_job(const std::string& job_id) const = 0;
  // Simulated backends generate events up to the given virtual time.
  virtual void advance_to(int64_t now_s) { (void)now_s; }
};

// Insertion-ordered backend collection. Health is tracked by the
// controller (it is event-sourced state), not here.
class Registry {
 public:
  void add(std::shared_ptr<Backend> backend);
  const std::vector<std::shared_ptr<Backend>>& all() const { return backends_; }
  Backend* find(const std::string& name) const;

 private:
  std::vector<std::shared_ptr<Backend>> backends_;
};

// ---- ranked selection ----

struct FactorRecord {
  std::string layer;   // schema | compiler | scheduling | execution
  std::string factor;
  std::string effect;
};

struct SelectionTrace {
  std::vector<std::string> backends;  // ranked, best first
  std::vector<FactorRecord> factors;  // one record per layer, in layer order

  json to_json() const;
  static SelectionTrace from_json(const json& doc);
};

struct StaticRule {
  uint64_t bundle_size_gt = 0;  // rule applies when bundle exceeds this (0 = ignore)
  std::string language;         // rule applies when language matches ("" = ignore)
  std::string prefer;           // backend to pull forward
};

struct RuntimeRule {
  int64_t duration_lt_s = 0;  // applies when expected duration is below this
  std::string prefer;
};

struct SelectionRules {
  std::vector<StaticRule> static_rules;
  std::vector<RuntimeRule> runtime_rules;

  static SelectionRules from_json(const json& doc);
  json to_json() const;
};

// Builds the ranked backend list layer by layer; earlier layers pin
// positions that later layers cannot override. Throws backend_unavailable
// when no healthy backend can satisfy the per-node request.
SelectionTrace select_backend(const schema::TaskSpec& spec,
                              const bundle::StaticCharacteristics& static_chars,
                              int64_t expected_duration_s, const Registry& registry,
                              const std::set<std::string>& down_backends,
                              const SelectionRules& rules);

// Next backend in the trace not yet attempted and currently healthy.
std::optional<std::string> failover_next(const SelectionTrace& trace,
                                         const std::set<std::string>& attempted,
                                         const std::set<std::string>& down_backends);

// The injected environment for one rank: user env plus the TACC_* contract.
std::map<std::string, std::string> rank_env(const ProvisionRequest& req, int64_t rank);

}  // namespace tacc::exec
