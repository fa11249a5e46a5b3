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

#include "reference_sched.hpp"

#include <algorithm>
#include <cmath>

namespace tacc::test::refsched {

namespace {

using schema::ResourceReq;
using NodeFree = std::map<std::string, ResourceReq>;

bool fits(const ResourceReq& need, const ResourceReq& avail) {
  return need.cpus <= avail.cpus && need.gpus <= avail.gpus && need.mem_mib <= avail.mem_mib;
}

void take(ResourceReq& avail, const ResourceReq& need) {
  avail.cpus -= need.cpus;
  avail.gpus -= need.gpus;
  avail.mem_mib -= need.mem_mib;
}

// Same deterministic placement rule the engine documents: walk nodes in
// name order, claim the first `nodes` that have room.
std::vector<std::string> place(const RefJob& j, const NodeFree& free) {
  std::vector<std::string> picked;
  for (const auto& [name, avail] : free) {
    if (fits(j.per_node, avail)) {
      picked.push_back(name);
      if (static_cast<int64_t>(picked.size()) == j.nodes) return picked;
    }
  }
  return {};
}

double score(const RefJob& j, const std::map<std::string, RefAccount>& accounts,
             const RefWeights& w, int64_t now) {
  double total_u = 0, total_w = 0;
  for (const auto& [_, a] : accounts) {
    total_u += a.usage;
    total_w += a.weight;
  }
  auto it = accounts.find(j.user);
  double my_u = it == accounts.end() ? 0.0 : it->second.usage;
  double my_w = it == accounts.end() ? 1.0 : it->second.weight;
  if (it == accounts.end()) total_w += my_w;
  double fs = 1.0;
  if (total_u > 0) fs = std::exp2(-(my_u / total_u) / (my_w / total_w));

  double age = static_cast<double>(now - j.submit) / static_cast<double>(w.age_max_s);
  double age_norm = std::min(std::max(age, 0.0), 1.0);
  double qos_norm = j.qos == 2 ? 1.0 : (j.qos == 1 ? 0.5 : 0.0);
  return w.age * age_norm + w.fair_share * fs + w.qos * qos_norm;
}

}  // namespace

RefResult simulate(const std::vector<RefNode>& nodes, const std::vector<RefJob>& jobs,
                   const std::map<std::string, RefAccount>& accounts, const RefWeights& weights,
                   bool backfill, int64_t horizon) {
  RefResult out;

  struct Live {
    const RefJob* job;
    std::vector<std::string> node_names;
    int64_t end;
  };
  std::vector<Live> running;
  std::set<std::string> started;

  std::map<std::string, ResourceReq> capacity;
  for (const auto& n : nodes) capacity[n.name] = n.cap;

  // free capacity at instant t, counting `running` plus `extra` placements
  auto free_at = [&](int64_t t, const std::vector<Live>& extra) {
    NodeFree free = capacity;
    for (const auto& r : running)
      if (r.end > t)
        for (const auto& n : r.node_names) take(free[n], r.job->per_node);
    for (const auto& r : extra)
      if (r.end > t)
        for (const auto& n : r.node_names) take(free[n], r.job->per_node);
    return free;
  };

  for (int64_t t = 0; t <= horizon; ++t) {
    running.erase(std::remove_if(running.begin(), running.end(),
                                 [&](const Live& r) { return r.end <= t; }),
                  running.end());

    // capacity audit, from scratch
    {
      NodeFree free = free_at(t, {});
      for (const auto& [_, avail] : free)
        if (avail.cpus < 0 || avail.gpus < 0 || avail.mem_mib < 0) out.oversubscribed = true;
    }

    std::vector<const RefJob*> pending;
    for (const auto& j : jobs)
      if (j.submit <= t && !started.count(j.id)) pending.push_back(&j);
    if (pending.empty()) continue;

    std::vector<std::pair<double, const RefJob*>> order;
    for (const RefJob* j : pending) order.push_back({score(*j, accounts, weights, t), j});
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      if (a.second->submit != b.second->submit) return a.second->submit < b.second->submit;
      return a.second->id < b.second->id;
    });

    std::map<std::string, int64_t> gpus_now;
    for (const auto& r : running) gpus_now[r.job->user] += r.job->per_node.gpus * r.job->nodes;

    NodeFree free_now = free_at(t, {});
    std::vector<Live> cycle_starts;  // consulted by future-free recomputation
    bool reserved = false;
    int64_t t_r = 0;
    std::vector<std::string> shadow_nodes;
    const RefJob* head = nullptr;

    auto do_start = [&](const RefJob* j, const std::vector<std::string>& where) {
      for (const auto& n : where) take(free_now[n], j->per_node);
      cycle_starts.push_back({j, where, t + std::max<int64_t>(j->wall, 1)});
      gpus_now[j->user] += j->per_node.gpus * j->nodes;
      started.insert(j->id);
      out.start[j->id] = t;
    };

    for (const auto& [_, j] : order) {
      auto acct = accounts.find(j->user);
      int64_t quota = acct == accounts.end() ? -1 : acct->second.max_running_gpus;
      if (quota >= 0 && gpus_now[j->user] + j->per_node.gpus * j->nodes > quota)
        continue;  // over quota: neither starts nor reserves

      if (!reserved) {
        auto where = place(*j, free_now);
        if (!where.empty()) {
          do_start(j, where);
          continue;
        }
        // head blocked: linear-search the earliest instant it fits
        for (int64_t f = t; f < t + 1000000; ++f) {
          auto where_f = place(*j, free_at(f, cycle_starts));
          if (!where_f.empty()) {
            t_r = f;
            shadow_nodes = where_f;
            break;
          }
        }
        head = j;
        out.heads.insert(j->id);
        out.promises.push_back({t, j->id, t_r});
        reserved = true;
        if (!backfill) break;
        continue;
      }

      // after the reservation: may not delay the head
      std::vector<std::string> where;
      if (t + j->wall <= t_r) {
        where = place(*j, free_now);
      } else {
        NodeFree shadow = free_at(t_r, cycle_starts);
        for (const auto& n : shadow_nodes) take(shadow[n], head->per_node);
        NodeFree both = free_now;
        for (auto& [name, avail] : both) {
          const auto& s = shadow[name];
          avail.cpus = std::min(avail.cpus, s.cpus);
          avail.gpus = std::min(avail.gpus, s.gpus);
          avail.mem_mib = std::min(avail.mem_mib, s.mem_mib);
        }
        where = place(*j, both);
      }
      if (!where.empty()) do_start(j, where);
    }

    for (auto& s : cycle_starts) running.push_back(std::move(s));
  }

  return out;
}

}  // namespace tacc::test::refsched
