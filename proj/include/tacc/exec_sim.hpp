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

#include <map>
#include <string>
#include <vector>

#include "tacc/cas.hpp"
#include "tacc/exec.hpp"

namespace tacc::exec {

// A deterministic discrete-event virtual cluster. Behavior is driven by
// an optional `sim_script.json` file at the bundle root:
//
//   {
//     "provision_fail": ["sim0"],          // backends that refuse this job
//     "events": [
//       {"rank":0,"t":2,"kind":"log","stream":"stdout","text":"hello"},
//       {"rank":1,"t":4,"kind":"file","path":"out/a.txt","content":"x"},
//       {"rank":0,"t":5,"kind":"exit","code":0}
//     ]
//   }
//
// Event times are in *active* seconds: a suspended job does not advance
// toward its next event. A rank without an exit event exits 0 one second
// after its last scripted event (at t=1 when it has none). There is no
// randomness anywhere, so identical scripts yield identical streams.
class SimBackend : public Backend {
 public:
  SimBackend(std::string name, sched::ResourceReq max_per_node, const bundle::Cas* cas);

  const BackendDescriptor& descriptor() const override { return desc_; }
  std::vector<std::string> provision(const ProvisionRequest& req) override;
  std::vector<TaskEvent> drain_events() override;
  StopAck stop(const std::string& job_id, int64_t grace_s, int64_t now_s) override;
  StopAck suspend(const std::string& job_id, int64_t now_s) override;
  void resume(const std::string& job_id, int64_t now_s) override;
  std::vector<FetchedFile> fetch(const std::string& job_id, const std::string& glob) override;
  bool has_job(const std::string& job_id) const override;
  void advance_to(int64_t now_s) override;

  // test hooks
  int64_t total_active_s(const std::string& job_id, int64_t now_s) const;
  std::map<std::string, std::string> runner_env(const std::string& job_id, int64_t rank) const;
  size_t live_rank_count() const;  // ranks not yet terminal, across jobs

 private:
  struct ScriptEvent {
    int64_t t = 0;  // active seconds since provision
    std::string kind;
    std::string stream;
    std::string text;
    int64_t code = 0;
    std::string path;
    std::string content;
    bool exec = false;
  };

  struct RankState {
    std::vector<ScriptEvent> pending;  // ascending t
    uint64_t next_seq = 1;
    bool exited = false;
    std::map<std::string, std::pair<std::string, bool>> files;  // overlay writes
    std::map<std::string, std::string> env;
  };

  struct SimJob {
    bundle::BundleManifest manifest;
    std::vector<RankState> ranks;
    bool suspended = false;
    bool finished = false;      // stopped or all ranks exited
    int64_t accrued_s = 0;      // completed active seconds
    int64_t interval_start_s = 0;  // accrued_s value at the last resume
    int64_t resume_g = 0;       // global time accrual restarted
    double total_cpus = 0;
    double total_gpus = 0;
  };

  int64_t active_of(const SimJob& job, int64_t now_s) const;
  StopAck ack_of(const SimJob& job, int64_t active_now) const;

  BackendDescriptor desc_;
  const bundle::Cas* cas_;
  std::map<std::string, SimJob> jobs_;
  std::vector<TaskEvent> out_;
  int64_t now_ = 0;
};

}  // namespace tacc::exec
