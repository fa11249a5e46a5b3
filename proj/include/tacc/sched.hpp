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

#include "tacc/schema.hpp"
#include "tacc/util.hpp"

// The decision engine is a pure function of its inputs: no clocks, no
// randomness, no internal state. Identical inputs yield byte-identical
// decisions (all containers are ordered, all ties broken explicitly).
namespace tacc::sched {

using schema::Qos;
using schema::ResourceReq;

struct Allocation {
  std::string job_id;
  ResourceReq req;        // per this node
  int64_t est_end_s = 0;  // projected completion used for reservations
};

struct NodeState {
  std::string name;
  ResourceReq capacity;
  std::vector<Allocation> allocations;

  ResourceReq allocated() const;
  ResourceReq free() const;
};

struct ClusterState {
  std::vector<NodeState> nodes;  // unique names
  int64_t now = 0;
};

// Returns false if any node is oversubscribed in any dimension.
bool within_capacity(const ClusterState& cluster);

struct Quota {
  int64_t max_running_gpus = -1;  // -1 = unlimited
  int64_t max_queued_jobs = -1;
};

struct AccountState {
  std::string user;
  double share_weight = 1.0;
  double usage = 0.0;  // decayed resource-seconds
  Quota quota;
};

using Accounts = std::map<std::string, AccountState>;

struct PolicyWeights {
  double age = 1000.0;
  double fair_share = 2000.0;
  double qos = 4000.0;
  int64_t age_max_s = 7 * 24 * 3600;
};

struct Policy {
  PolicyWeights weights;
  double half_life_s = 86400.0;
  int64_t quantum_s = 30;
  bool preemption_enabled = true;
  bool backfill_enabled = true;
  double usage_cpu_weight = 0.1;  // usage = gpu-seconds + this * cpu-seconds
  double walltime_grace = 1.25;   // kill at grace * estimate
  std::map<std::string, double> share_weights;
  std::map<std::string, Quota> quotas;

  static Policy from_json(const json& doc);  // throws schema_invalid
  json to_json() const;

  AccountState account_defaults(const std::string& user) const;
};

struct QueueEntry {
  std::string job_id;
  std::string user;
  Qos qos = Qos::normal;
  ResourceReq per_node;
  int64_t nodes = 1;
  int64_t walltime_estimate_s = 1;
  int64_t submit_time_s = 0;
  double priority = 0.0;  // filled by prioritize()

  int64_t total_gpus() const { return per_node.gpus * nodes; }
};

// node name -> per-node resources taken there
using Placement = std::map<std::string, ResourceReq>;

struct RunningInfo {
  std::string job_id;
  std::string user;
  Qos qos = Qos::normal;
  double priority = 0.0;
  int64_t start_time_s = 0;
  Placement placement;

  int64_t total_gpus() const;
};

struct Start {
  std::string job_id;
  Placement placement;
  bool backfill = false;
  int64_t est_end_s = 0;
};

struct Reservation {
  std::string job_id;
  int64_t t_r = 0;
  Placement placement;
};

struct GangOp {
  enum class Kind { suspend, resume };
  Kind kind = Kind::suspend;
  std::string job_id;
};

struct ScheduleDecision {
  std::vector<Start> starts;
  std::vector<std::string> preemptions;
  std::optional<Reservation> reservation;
  std::vector<GangOp> gang_ops;

  bool empty() const {
    return starts.empty() && preemptions.empty() && !reservation && gang_ops.empty();
  }
  json to_json() const;
};

// ---- fair share ----

// U <- U * 0.5^(dt/half_life), applied to every account.
void decay_usage(Accounts& accounts, double dt_s, double half_life_s);

// 2^(-u/s) with u the user's fraction of decayed usage and s their
// fraction of share weight. 1.0 when total usage is zero.
double fair_share_factor(const std::string& user, const Accounts& accounts);

double compute_priority(const QueueEntry& entry, const Accounts& accounts, int64_t now,
                        const PolicyWeights& weights);

// Fills priorities and sorts by (priority desc, submit asc, job_id asc).
void prioritize(std::vector<QueueEntry>& queue, const Accounts& accounts, int64_t now,
                const PolicyWeights& weights);

// ---- quota ----

// Start-time verdict: running_gpus is the user's current total.
bool quota_admits_start(const QueueEntry& entry, const Quota& quota, int64_t running_gpus);
// Submit-time verdict against max_queued_jobs.
bool quota_admits_enqueue(const Quota& quota, int64_t queued_jobs);

// ---- placement ----

// First fit over nodes in name order; nullopt when fewer than `nodes`
// nodes have room.
std::optional<Placement> first_fit(const ResourceReq& per_node, int64_t nodes,
                                   const std::map<std::string, ResourceReq>& free);

// ---- the cycle ----

// EASY backfill over a priority-sorted queue. `running` describes the
// jobs behind cluster.allocations (for preemption and quota context).
ScheduleDecision schedule_cycle(std::vector<QueueEntry> queue, const ClusterState& cluster,
                                const Accounts& accounts, const std::vector<RunningInfo>& running,
                                const Policy& policy);

// ---- gang rotation ----

struct Gang {
  std::string id;
  Placement partition;              // resources the members time-slice
  std::vector<std::string> members; // rotation order; each member is one job
  std::string active;               // member currently running
  int64_t last_switch_s = 0;
};

// Suspend/resume pair when the quantum has elapsed; empty otherwise.
std::vector<GangOp> gang_rotate(const Gang& gang, int64_t now, int64_t quantum_s);

}  // namespace tacc::sched
