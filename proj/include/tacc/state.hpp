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

#include "tacc/events.hpp"
#include "tacc/hash.hpp"
#include "tacc/sched.hpp"
#include "tacc/schema.hpp"

namespace tacc::controld {

enum class JobState {
  Submitted,
  Compiling,
  Queued,
  Provisioning,
  Running,
  Suspended,
  Preempted,
  Succeeded,
  Failed,
  Killed,
};

constexpr JobState kAllJobStates[] = {
    JobState::Submitted, JobState::Compiling,  JobState::Queued,  JobState::Provisioning,
    JobState::Running,   JobState::Suspended,  JobState::Preempted, JobState::Succeeded,
    JobState::Failed,    JobState::Killed,
};

const char* job_state_name(JobState s);
JobState job_state_from_name(const std::string& s);
bool is_terminal(JobState s);

struct JobRecord {
  std::string job_id;
  std::string user;
  std::string name;
  Digest spec_hash;
  Digest bundle_id;
  std::string spec_canonical;
  schema::Qos qos = schema::Qos::normal;
  sched::ResourceReq per_node;
  int64_t nodes = 1;
  int64_t walltime_estimate_s = 1;

  JobState state = JobState::Submitted;
  std::string failure_reason;                // when Failed, or a non-user kill cause
  std::map<std::string, int64_t> timestamps; // state name -> time last entered
  json selection_trace;                      // recorded by the compile step
  std::map<int64_t, int64_t> exit_codes;     // rank -> code

  // live allocation bookkeeping (empty/zero unless holding resources)
  sched::Placement placement;
  int64_t est_end_s = 0;
  std::string backend;
  std::vector<std::string> backends_attempted;  // current provisioning round

  int64_t submit_time_s = 0;
  int64_t start_time_s = 0;        // last transition into Running
  int64_t active_accrued_s = 0;    // active seconds from completed run intervals
  double priority = 0.0;           // last computed (informational)

  bool holds_resources() const { return !placement.empty(); }
  json to_json() const;
  static JobRecord from_json(const json& doc);
};

struct ControllerState {
  std::map<std::string, JobRecord> jobs;
  std::map<std::string, double> usage;  // user -> decayed resource-seconds
  uint64_t next_job_num = 1;
  uint64_t last_seq = 0;
  int64_t last_decay_t = 0;
  std::map<std::string, sched::Gang> gangs;
  std::map<std::string, int64_t> backend_down_since;

  json to_json() const;
  static ControllerState from_json(const json& doc);
};

// Pure transition. Throws sequence_gap when e.seq != last_seq+1 and
// state_conflict for undefined (state, kind) pairs; the input state is
// never mutated on failure.
void apply_event(ControllerState& state, const Event& e);

// ---- payload builders ----
// Events are written by the controller and replayed by recovery; these
// keep the payload field names in one place.

Event ev_submitted(uint64_t seq, int64_t t, const JobRecord& job);
Event ev_compile_started(uint64_t seq, int64_t t, const std::string& job_id);
Event ev_compiled_ok(uint64_t seq, int64_t t, const std::string& job_id, json selection_trace);
Event ev_compiled_failed(uint64_t seq, int64_t t, const std::string& job_id,
                         const std::string& code, const std::string& message);
Event ev_enqueued(uint64_t seq, int64_t t, const std::string& job_id);
Event ev_decision_applied(uint64_t seq, int64_t t, json decision);
Event ev_provision_started(uint64_t seq, int64_t t, const std::string& job_id,
                           const std::string& backend, const sched::Placement& placement,
                           int64_t est_end_s);
Event ev_provisioned(uint64_t seq, int64_t t, const std::string& job_id,
                     const std::vector<std::string>& runner_ids);
Event ev_provision_failed(uint64_t seq, int64_t t, const std::string& job_id,
                          const std::string& cause, bool fatal);
Event ev_rank_started(uint64_t seq, int64_t t, const std::string& job_id, int64_t rank);
Event ev_rank_exited(uint64_t seq, int64_t t, const std::string& job_id, int64_t rank,
                     int64_t code, int64_t active_s, double usage_charge);
Event ev_suspended(uint64_t seq, int64_t t, const std::string& job_id, int64_t active_s,
                   double usage_charge);
Event ev_resumed(uint64_t seq, int64_t t, const std::string& job_id,
                 const sched::Placement& placement, int64_t est_end_s);
Event ev_preempted(uint64_t seq, int64_t t, const std::string& job_id, int64_t active_s,
                   double usage_charge);
Event ev_killed(uint64_t seq, int64_t t, const std::string& job_id, const std::string& cause,
                int64_t active_s, double usage_charge);
Event ev_gang_changed(uint64_t seq, int64_t t, const sched::Gang& gang);
Event ev_gang_deleted(uint64_t seq, int64_t t, const std::string& gang_id);
Event ev_backend_health(uint64_t seq, int64_t t, const std::string& backend, bool up);
Event ev_usage_decayed(uint64_t seq, int64_t t, double dt_s, double half_life_s);

sched::Placement placement_from_json(const json& doc);
json placement_to_json(const sched::Placement& p);

// ---- persistence ----

struct RecoveryResult {
  ControllerState state;
  std::optional<uint64_t> corrupt_at_seq;  // LOG_CORRUPT position when set
};

// Folds snapshot.json (if present) plus events.log under state_dir.
RecoveryResult recover(const std::filesystem::path& state_dir);

void write_snapshot(const std::filesystem::path& state_dir, const ControllerState& state);

constexpr uint64_t kSnapshotEvery = 10000;

}  // namespace tacc::controld
