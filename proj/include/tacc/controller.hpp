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
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tacc/cas.hpp"
#include "tacc/events.hpp"
#include "tacc/exec.hpp"
#include "tacc/joblog.hpp"
#include "tacc/sched.hpp"
#include "tacc/state.hpp"

namespace tacc::controld {

struct NodeConfig {
  std::string name;
  sched::ResourceReq capacity;
};

struct BackendConfig {
  std::string name;
  std::string kind;  // "simulated" | "local_process"
  sched::ResourceReq max_per_node;
};

struct ControllerConfig {
  std::vector<NodeConfig> nodes;
  std::vector<BackendConfig> backends;
  exec::SelectionRules selection_rules;
  int64_t probe_interval_s = 30;
  int64_t preempt_grace_s = 10;

  static ControllerConfig from_json(const json& doc);  // throws schema_invalid
  json to_json() const;
  schema::ClusterLimits limits() const;
};

// The service core: owns the event log, the job table, the CAS, the
// backend registry, and the scheduler inputs. Every mutation is an event
// appended under one mutex — protocol sessions and the tick timer are
// just callers. Time is injected through tick(), so tests can drive a
// virtual clock and the sim backend stays deterministic.
class Controller {
 public:
  Controller(std::filesystem::path state_dir, ControllerConfig config, sched::Policy policy);

  // ---- mutations ----
  // Returns the new job id. The referenced manifest and all of its
  // objects must already be in the CAS (the upload negotiation contract).
  std::string submit(const json& spec_doc, const std::string& manifest_hex);
  void kill(const std::string& job_id);
  // One scheduler period: drain backends, decay usage, compile, enforce
  // walltimes, schedule, rotate gangs, probe health.
  void tick(int64_t now_s);

  // ---- queries ----
  json status(const std::string& job_id) const;  // throws not_found
  json list(const json& filter) const;
  std::vector<exec::FetchedFile> fetch(const std::string& job_id, const std::string& glob);
  bool job_known(const std::string& job_id) const;
  bool job_terminal(const std::string& job_id) const;

  joblog::JobLogStore& logs() { return logs_; }
  bundle::Cas& cas() { return cas_; }
  const sched::Policy& policy() const { return policy_; }
  int64_t now() const;

  // introspection for tests and the serve log line
  ControllerState state_copy() const;
  std::optional<uint64_t> recovered_corrupt_seq() const { return corrupt_seq_; }
  exec::Registry& registry() { return registry_; }

 private:
  uint64_t next_seq() const { return st_.last_seq + 1; }
  void emit(Event e);
  void finish_logs(const std::string& job_id);
  double charge_of(const exec::StopAck& ack) const;
  std::set<std::string> down_set() const;
  bundle::BundleManifest load_manifest(const Digest& bundle_id) const;
  exec::StopAck stop_backend(const JobRecord& job, int64_t grace_s);
  bool in_gang(const std::string& job_id) const;
  int64_t remaining_estimate(const JobRecord& job) const;
  sched::Accounts build_accounts() const;

  void drain_backends();
  void handle_task_event(exec::Backend& b, const exec::TaskEvent& ev);
  void decay_usage();
  void run_compiles();
  void enforce_walltimes();
  void run_schedule();
  void preempt_job(const std::string& job_id);
  bool provision_job(const std::string& job_id, const sched::Placement& placement,
                     int64_t est_end_s);
  bool resume_member(const std::string& job_id, const sched::Placement& partition);
  void maintain_gangs();
  void rotate_to(sched::Gang gang, const std::string& next);
  void form_gangs();
  void probe_backends();

  std::filesystem::path state_dir_;
  ControllerConfig cfg_;
  sched::Policy policy_;
  bundle::Cas cas_;
  exec::Registry registry_;

  mutable std::mutex mu_;
  ControllerState st_;
  std::unique_ptr<EventLog> log_;
  int64_t now_s_ = 0;
  std::optional<uint64_t> corrupt_seq_;

  joblog::JobLogStore logs_;
};

}  // namespace tacc::controld
