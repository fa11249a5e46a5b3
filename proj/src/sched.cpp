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

#include "tacc/sched.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "tacc/errors.hpp"

namespace tacc::sched {

namespace {

json req_to_json(const ResourceReq& r) {
  return {{"cpus", r.cpus}, {"gpus", r.gpus}, {"mem_mib", r.mem_mib}};
}

json placement_to_json(const Placement& p) {
  json out = json::object();
  for (const auto& [node, req] : p) out[node] = req_to_json(req);
  return out;
}

}  // namespace

ResourceReq NodeState::allocated() const {
  ResourceReq sum;
  for (const auto& a : allocations) sum += a.req;
  return sum;
}

ResourceReq NodeState::free() const { return capacity - allocated(); }

bool within_capacity(const ClusterState& cluster) {
  for (const auto& n : cluster.nodes)
    if (!n.allocated().fits_in(n.capacity)) return false;
  return true;
}

int64_t RunningInfo::total_gpus() const {
  int64_t g = 0;
  for (const auto& [_, req] : placement) g += req.gpus;
  return g;
}

json ScheduleDecision::to_json() const {
  json doc;
  json js = json::array();
  for (const auto& s : starts)
    js.push_back({{"job_id", s.job_id},
                  {"placement", placement_to_json(s.placement)},
                  {"backfill", s.backfill},
                  {"est_end_s", s.est_end_s}});
  doc["starts"] = std::move(js);
  doc["preemptions"] = preemptions;
  if (reservation)
    doc["reservation"] = {{"job_id", reservation->job_id},
                          {"t_r", reservation->t_r},
                          {"placement", placement_to_json(reservation->placement)}};
  else
    doc["reservation"] = nullptr;
  json ops = json::array();
  for (const auto& op : gang_ops)
    ops.push_back({{"op", op.kind == GangOp::Kind::suspend ? "suspend" : "resume"},
                   {"job_id", op.job_id}});
  doc["gang_ops"] = std::move(ops);
  return doc;
}

// ---- policy ----

Policy Policy::from_json(const json& doc) {
  Policy p;
  if (!doc.is_object()) fail(Errc::schema_invalid, "policy must be an object");
  try {
    if (doc.contains("weights")) {
      const auto& w = doc.at("weights");
      if (w.contains("age")) p.weights.age = w.at("age").get<double>();
      if (w.contains("fair_share")) p.weights.fair_share = w.at("fair_share").get<double>();
      if (w.contains("qos")) p.weights.qos = w.at("qos").get<double>();
      if (w.contains("age_max_s")) p.weights.age_max_s = w.at("age_max_s").get<int64_t>();
    }
    if (doc.contains("half_life_s")) p.half_life_s = doc.at("half_life_s").get<double>();
    if (doc.contains("quantum_s")) p.quantum_s = doc.at("quantum_s").get<int64_t>();
    if (doc.contains("preemption_enabled"))
      p.preemption_enabled = doc.at("preemption_enabled").get<bool>();
    if (doc.contains("backfill_enabled"))
      p.backfill_enabled = doc.at("backfill_enabled").get<bool>();
    if (doc.contains("usage_cpu_weight"))
      p.usage_cpu_weight = doc.at("usage_cpu_weight").get<double>();
    if (doc.contains("walltime_grace")) p.walltime_grace = doc.at("walltime_grace").get<double>();
    if (doc.contains("share_weights"))
      for (const auto& [user, w] : doc.at("share_weights").items())
        p.share_weights[user] = w.get<double>();
    if (doc.contains("quotas"))
      for (const auto& [user, q] : doc.at("quotas").items()) {
        Quota quota;
        if (q.contains("max_running_gpus"))
          quota.max_running_gpus = q.at("max_running_gpus").get<int64_t>();
        if (q.contains("max_queued_jobs"))
          quota.max_queued_jobs = q.at("max_queued_jobs").get<int64_t>();
        p.quotas[user] = quota;
      }
  } catch (const json::exception& ex) {
    fail(Errc::schema_invalid, std::string("malformed policy: ") + ex.what());
  }
  if (p.half_life_s <= 0) fail(Errc::schema_invalid, "half_life_s must be > 0", "half_life_s");
  if (p.quantum_s <= 0) fail(Errc::schema_invalid, "quantum_s must be > 0", "quantum_s");
  return p;
}

json Policy::to_json() const {
  json doc;
  doc["weights"] = {{"age", weights.age},
                    {"fair_share", weights.fair_share},
                    {"qos", weights.qos},
                    {"age_max_s", weights.age_max_s}};
  doc["half_life_s"] = half_life_s;
  doc["quantum_s"] = quantum_s;
  doc["preemption_enabled"] = preemption_enabled;
  doc["backfill_enabled"] = backfill_enabled;
  doc["usage_cpu_weight"] = usage_cpu_weight;
  doc["walltime_grace"] = walltime_grace;
  json sw = json::object();
  for (const auto& [u, w] : share_weights) sw[u] = w;
  doc["share_weights"] = std::move(sw);
  json qs = json::object();
  for (const auto& [u, q] : quotas)
    qs[u] = {{"max_running_gpus", q.max_running_gpus}, {"max_queued_jobs", q.max_queued_jobs}};
  doc["quotas"] = std::move(qs);
  return doc;
}

AccountState Policy::account_defaults(const std::string& user) const {
  AccountState a;
  a.user = user;
  auto w = share_weights.find(user);
  if (w != share_weights.end()) a.share_weight = w->second;
  auto q = quotas.find(user);
  if (q != quotas.end()) a.quota = q->second;
  return a;
}

// ---- fair share ----

void decay_usage(Accounts& accounts, double dt_s, double half_life_s) {
  if (dt_s <= 0) return;
  double f = std::exp2(-dt_s / half_life_s);
  for (auto& [_, a] : accounts) a.usage *= f;
}

double fair_share_factor(const std::string& user, const Accounts& accounts) {
  double total_usage = 0, total_weight = 0;
  for (const auto& [_, a] : accounts) {
    total_usage += a.usage;
    total_weight += a.share_weight;
  }
  auto it = accounts.find(user);
  double my_usage = it == accounts.end() ? 0.0 : it->second.usage;
  double my_weight = it == accounts.end() ? 1.0 : it->second.share_weight;
  if (it == accounts.end()) total_weight += my_weight;
  if (total_usage <= 0) return 1.0;
  double u = my_usage / total_usage;
  double s = my_weight / total_weight;
  return std::exp2(-u / s);
}

double compute_priority(const QueueEntry& entry, const Accounts& accounts, int64_t now,
                        const PolicyWeights& weights) {
  double age = static_cast<double>(now - entry.submit_time_s) /
               static_cast<double>(weights.age_max_s);
  double age_norm = std::min(std::max(age, 0.0), 1.0);
  return weights.age * age_norm + weights.fair_share * fair_share_factor(entry.user, accounts) +
         weights.qos * schema::qos_norm(entry.qos);
}

void prioritize(std::vector<QueueEntry>& queue, const Accounts& accounts, int64_t now,
                const PolicyWeights& weights) {
  for (auto& e : queue) e.priority = compute_priority(e, accounts, now, weights);
  std::sort(queue.begin(), queue.end(), [](const QueueEntry& a, const QueueEntry& b) {
    if (a.priority != b.priority) return a.priority > b.priority;
    if (a.submit_time_s != b.submit_time_s) return a.submit_time_s < b.submit_time_s;
    return a.job_id < b.job_id;
  });
}

// ---- quota ----

bool quota_admits_start(const QueueEntry& entry, const Quota& quota, int64_t running_gpus) {
  if (quota.max_running_gpus < 0) return true;
  return running_gpus + entry.total_gpus() <= quota.max_running_gpus;
}

bool quota_admits_enqueue(const Quota& quota, int64_t queued_jobs) {
  if (quota.max_queued_jobs < 0) return true;
  return queued_jobs < quota.max_queued_jobs;
}

// ---- placement ----

std::optional<Placement> first_fit(const ResourceReq& per_node, int64_t nodes,
                                   const std::map<std::string, ResourceReq>& free) {
  Placement p;
  for (const auto& [name, avail] : free) {
    if (per_node.fits_in(avail)) {
      p[name] = per_node;
      if (static_cast<int64_t>(p.size()) == nodes) return p;
    }
  }
  return std::nullopt;
}

// ---- the cycle ----

namespace {

struct ProjectedAlloc {
  std::string node;
  ResourceReq req;
  int64_t eff_end_s;  // clamped so overrunning jobs free "soon", not in the past
};

std::map<std::string, ResourceReq> free_at(
    const std::map<std::string, ResourceReq>& capacity, const std::vector<ProjectedAlloc>& allocs,
    int64_t t) {
  auto free = capacity;
  for (const auto& a : allocs)
    if (a.eff_end_s > t) free[a.node] -= a.req;
  return free;
}

// Earliest time the entry fits assuming allocations end on schedule.
// Resources only free over time, so scanning end times in order finds it.
std::pair<int64_t, Placement> earliest_fit(const QueueEntry& entry,
                                           const std::map<std::string, ResourceReq>& capacity,
                                           const std::vector<ProjectedAlloc>& allocs,
                                           int64_t now) {
  std::set<int64_t> times{now};
  for (const auto& a : allocs)
    if (a.eff_end_s > now) times.insert(a.eff_end_s);
  for (int64_t t : times) {
    auto placement = first_fit(entry.per_node, entry.nodes, free_at(capacity, allocs, t));
    if (placement) return {t, *placement};
  }
  // Unreachable for validated jobs: past the last end time the cluster is
  // empty. Treat as "never" for robustness.
  return {std::numeric_limits<int64_t>::max(), {}};
}

struct PreemptCandidate {
  std::string job_id;
  double priority;
  int64_t start_time_s;
  Placement placement;
  int64_t gpus;
};

// Smallest set of preemptible victims that lets the head start now.
// Candidates are tried in (priority asc, start desc, job_id asc) order;
// sets are enumerated smallest-first so the result has minimal size and
// prefers the lowest-priority victims among equal-size options.
std::optional<std::vector<PreemptCandidate>> min_preemption_set(
    const QueueEntry& head, const std::map<std::string, ResourceReq>& free_now,
    std::vector<PreemptCandidate> candidates) {
  std::sort(candidates.begin(), candidates.end(),
            [](const PreemptCandidate& a, const PreemptCandidate& b) {
              if (a.priority != b.priority) return a.priority < b.priority;
              if (a.start_time_s != b.start_time_s) return a.start_time_s > b.start_time_s;
              return a.job_id < b.job_id;
            });

  auto feasible = [&](const std::vector<size_t>& idx) {
    auto free = free_now;
    for (size_t i : idx)
      for (const auto& [node, req] : candidates[i].placement) free[node] += req;
    return first_fit(head.per_node, head.nodes, free).has_value();
  };

  size_t n = candidates.size();
  if (n == 0) return std::nullopt;

  if (n <= 12) {
    // exhaustive by size: guarantees both minimal cardinality and the
    // "removing any one victim breaks it" property
    for (size_t k = 1; k <= n; ++k) {
      std::vector<size_t> idx(k);
      for (size_t i = 0; i < k; ++i) idx[i] = i;
      while (true) {
        if (feasible(idx)) {
          std::vector<PreemptCandidate> out;
          for (size_t i : idx) out.push_back(candidates[i]);
          return out;
        }
        // next combination in lexicographic order
        size_t i = k;
        while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
        if (i == 0) break;
        ++idx[i - 1];
        for (size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
      }
    }
    return std::nullopt;
  }

  // large candidate sets: greedy in preference order, then prune back
  std::vector<size_t> picked;
  for (size_t i = 0; i < n && !feasible(picked); ++i) picked.push_back(i);
  if (!feasible(picked)) return std::nullopt;
  for (size_t i = picked.size(); i-- > 0;) {
    auto trial = picked;
    trial.erase(trial.begin() + static_cast<ptrdiff_t>(i));
    if (feasible(trial)) picked = std::move(trial);
  }
  std::vector<PreemptCandidate> out;
  for (size_t i : picked) out.push_back(candidates[i]);
  return out;
}

}  // namespace

ScheduleDecision schedule_cycle(std::vector<QueueEntry> queue, const ClusterState& cluster,
                                const Accounts& accounts, const std::vector<RunningInfo>& running,
                                const Policy& policy) {
  ScheduleDecision decision;
  const int64_t now = cluster.now;

  std::map<std::string, ResourceReq> capacity;
  std::vector<ProjectedAlloc> projected;
  for (const auto& n : cluster.nodes) {
    capacity[n.name] = n.capacity;
    for (const auto& a : n.allocations)
      projected.push_back({n.name, a.req, std::max(a.est_end_s, now + 1)});
  }
  auto free_now = free_at(capacity, projected, now);

  std::map<std::string, int64_t> running_gpus;
  std::map<std::string, const RunningInfo*> running_by_id;
  for (const auto& r : running) {
    running_gpus[r.user] += r.total_gpus();
    running_by_id[r.job_id] = &r;
  }

  auto quota_of = [&](const std::string& user) {
    auto it = accounts.find(user);
    return it == accounts.end() ? Quota{} : it->second.quota;
  };

  bool reserved = false;
  int64_t t_r = 0;
  bool preempt_attempted = false;
  std::set<std::string> preempted_ids;
  // shadow capacity at t_r: starts decided this cycle that outlive t_r
  // must be subtracted along with surviving allocations and the head
  auto start_entry = [&](const QueueEntry& e, Placement placement, bool backfill) {
    int64_t est_end = now + std::max<int64_t>(e.walltime_estimate_s, 1);
    for (const auto& [node, req] : placement) {
      free_now[node] -= req;
      projected.push_back({node, req, est_end});
    }
    running_gpus[e.user] += e.total_gpus();
    decision.starts.push_back({e.job_id, std::move(placement), backfill, est_end});
  };

  for (const auto& entry : queue) {
    if (!quota_admits_start(entry, quota_of(entry.user), running_gpus[entry.user]))
      continue;  // quota-blocked entries neither start nor hold the reservation

    if (!reserved) {
      if (auto placement = first_fit(entry.per_node, entry.nodes, free_now)) {
        start_entry(entry, std::move(*placement), false);
        continue;
      }

      // head is blocked: try preemption once per cycle for high qos
      if (policy.preemption_enabled && entry.qos == Qos::high && !preempt_attempted) {
        preempt_attempted = true;
        std::vector<PreemptCandidate> candidates;
        for (const auto& r : running) {
          if (r.qos != Qos::preemptible || preempted_ids.count(r.job_id)) continue;
          candidates.push_back({r.job_id, r.priority, r.start_time_s, r.placement, r.total_gpus()});
        }
        if (auto victims = min_preemption_set(entry, free_now, std::move(candidates))) {
          for (const auto& v : *victims) {
            preempted_ids.insert(v.job_id);
            decision.preemptions.push_back(v.job_id);
            for (const auto& [node, req] : v.placement) free_now[node] += req;
            running_gpus[running_by_id[v.job_id]->user] -= v.gpus;
          }
          // rebuild projections without the victims
          std::vector<ProjectedAlloc> kept;
          for (const auto& n : cluster.nodes)
            for (const auto& a : n.allocations)
              if (!preempted_ids.count(a.job_id))
                kept.push_back({n.name, a.req, std::max(a.est_end_s, now + 1)});
          for (const auto& s : decision.starts)
            for (const auto& [node, req] : s.placement)
              kept.push_back({node, req, s.est_end_s});
          projected = std::move(kept);

          auto placement = first_fit(entry.per_node, entry.nodes, free_now);
          if (placement) {
            start_entry(entry, std::move(*placement), false);
            continue;
          }
          // should not happen: the victim set was chosen to make this fit
        }
      }

      auto [when, shadow] = earliest_fit(entry, capacity, projected, now);
      decision.reservation = Reservation{entry.job_id, when, shadow};
      reserved = true;
      t_r = when;
      if (!policy.backfill_enabled) break;  // FCFS: nothing may pass the head
      continue;
    }

    // backfill: may not delay the reservation
    auto shadow_free = free_at(capacity, projected, t_r);
    for (const auto& [node, req] : decision.reservation->placement) shadow_free[node] -= req;

    std::optional<Placement> placement;
    if (now + entry.walltime_estimate_s <= t_r) {
      placement = first_fit(entry.per_node, entry.nodes, free_now);
    } else {
      // must fit both now and in the shadow at t_r on the same nodes
      auto constrained = free_now;
      for (auto& [node, avail] : constrained) {
        const auto& s = shadow_free[node];
        avail.cpus = std::min(avail.cpus, s.cpus);
        avail.gpus = std::min(avail.gpus, s.gpus);
        avail.mem_mib = std::min(avail.mem_mib, s.mem_mib);
      }
      placement = first_fit(entry.per_node, entry.nodes, constrained);
    }
    if (placement) start_entry(entry, std::move(*placement), true);
  }

  return decision;
}

// ---- gang rotation ----

std::vector<GangOp> gang_rotate(const Gang& gang, int64_t now, int64_t quantum_s) {
  if (gang.members.size() <= 1) return {};
  if (now - gang.last_switch_s < quantum_s) return {};
  auto it = std::find(gang.members.begin(), gang.members.end(), gang.active);
  if (it == gang.members.end()) return {};
  size_t next = (static_cast<size_t>(it - gang.members.begin()) + 1) % gang.members.size();
  return {{GangOp::Kind::suspend, gang.active}, {GangOp::Kind::resume, gang.members[next]}};
}

}  // namespace tacc::sched
