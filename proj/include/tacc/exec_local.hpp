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

#include <sys/types.h>

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <thread>

#include "tacc/cas.hpp"
#include "tacc/exec.hpp"

namespace tacc::exec {

// Runs entrypoints as host OS processes, one per rank, each in a fresh
// working directory materialized from the bundle. "Nodes" are emulated:
// every rank lives on this host but sees the TACC_* contract as if
// placed on its assigned node.
class LocalProcessBackend : public Backend {
 public:
  LocalProcessBackend(std::string name, sched::ResourceReq max_per_node, const bundle::Cas* cas,
                      std::filesystem::path work_root);
  ~LocalProcessBackend() override;

  const BackendDescriptor& descriptor() const override { return desc_; }
  std::vector<std::string> provision(const ProvisionRequest& req) override;
  std::vector<TaskEvent> drain_events() override;
  StopAck stop(const std::string& job_id, int64_t grace_s, int64_t now_s) override;
  StopAck suspend(const std::string& job_id, int64_t now_s) override;
  void resume(const std::string& job_id, int64_t now_s) override;
  std::vector<FetchedFile> fetch(const std::string& job_id, const std::string& glob) override;
  bool has_job(const std::string& job_id) const override;

 private:
  struct Rank {
    pid_t pid = -1;
    std::thread reader;
    std::atomic<bool> exited{false};
    std::filesystem::path dir;
  };

  struct LocalJob {
    std::vector<std::unique_ptr<Rank>> ranks;
    int64_t provisioned_g = 0;
    int64_t accrued_s = 0;
    int64_t interval_start_s = 0;
    int64_t resume_g = 0;
    bool suspended = false;
    bool stopped = false;
    double total_cpus = 0;
    double total_gpus = 0;
  };

  void push_event(TaskEvent ev);
  void reader_loop(std::string job_id, int64_t rank, Rank* rk, int out_fd, int err_fd);
  StopAck ack_job(LocalJob& job, int64_t now_wall);

  BackendDescriptor desc_;
  const bundle::Cas* cas_;
  std::filesystem::path work_root_;

  mutable std::mutex mu_;  // guards jobs_ structure and events_
  std::map<std::string, LocalJob> jobs_;
  std::vector<TaskEvent> events_;
};

}  // namespace tacc::exec
