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
//
// A deliberately naive scheduler simulator used as a test oracle. It walks
// wall time second by second, recomputes every quantity from scratch at
// every step, and finds reservations by linear search over future instants.
// It shares no code with tacc::sched beyond the plain data types.

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tacc/schema.hpp"

namespace tacc::test::refsched {

struct RefJob {
  std::string id;
  std::string user;
  int qos = 1;  // 2 high, 1 normal, 0 preemptible
  schema::ResourceReq per_node;
  int64_t nodes = 1;
  int64_t wall = 1;  // runtime equals the estimate
  int64_t submit = 0;
};

struct RefNode {
  std::string name;
  schema::ResourceReq cap;
};

struct RefAccount {
  double weight = 1.0;
  double usage = 0.0;            // held constant for the whole run
  int64_t max_running_gpus = -1;  // -1 unlimited
};

struct RefWeights {
  double age = 1000.0;
  double fair_share = 2000.0;
  double qos = 4000.0;
  int64_t age_max_s = 7 * 24 * 3600;
};

// One cycle's reservation: at time t the blocked head `id` was promised
// a start no later than t_r.
struct RefPromise {
  int64_t t = 0;
  std::string id;
  int64_t t_r = 0;
};

struct RefResult {
  std::map<std::string, int64_t> start;  // missing id = never started
  std::set<std::string> heads;           // jobs that ever held the reservation
  std::vector<RefPromise> promises;      // reservation issued each blocked cycle
  bool oversubscribed = false;           // capacity violated at some instant
};

RefResult simulate(const std::vector<RefNode>& nodes, const std::vector<RefJob>& jobs,
                   const std::map<std::string, RefAccount>& accounts, const RefWeights& weights,
                   bool backfill, int64_t horizon);

}  // namespace tacc::test::refsched
