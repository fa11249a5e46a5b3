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

#include "tacc/exec_sim.hpp"

#include <algorithm>

#include "tacc/errors.hpp"
#include "tacc/util.hpp"

namespace tacc::exec {

namespace {

// Pulls sim_script.json out of the bundle, if present.
json load_script(const bundle::BundleManifest& manifest, const bundle::Cas* cas) {
  for (const auto& e : manifest.entries) {
    if (e.path != "sim_script.json" || e.mode == bundle::EntryMode::dir) continue;
    std::string text;
    for (const auto& c : e.chunks) text += cas->get(c);
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded())
      fail(Errc::schema_invalid, "sim_script.json is not valid JSON");
    return doc;
  }
  return json::object();
}

}  // namespace

SimBackend::SimBackend(std::string name, sched::ResourceReq max_per_node, const bundle::Cas* cas)
    : cas_(cas) {
  desc_.name = std::move(name);
  desc_.kind = "simulated";
  desc_.max_per_node = max_per_node;
}

std::vector<std::string> SimBackend::provision(const ProvisionRequest& req) {
  if (jobs_.count(req.job_id) && !jobs_.at(req.job_id).finished)
    fail(Errc::provision_failed, "job " + req.job_id + " already provisioned on " + desc_.name);

  json script = load_script(req.manifest, cas_);
  if (script.contains("provision_fail"))
    for (const auto& b : script.at("provision_fail"))
      if (b.get<std::string>() == desc_.name)
        fail(Errc::provision_failed, "scripted provision failure on " + desc_.name);

  SimJob job;
  job.manifest = req.manifest;
  job.resume_g = req.now_s;
  int64_t nranks = static_cast<int64_t>(req.placement.size());
  job.ranks.resize(static_cast<size_t>(nranks));
  for (const auto& [_, per_node] : req.placement) {
    job.total_cpus += static_cast<double>(per_node.cpus);
    job.total_gpus += static_cast<double>(per_node.gpus);
  }

  if (script.contains("events"))
    for (const auto& ev : script.at("events")) {
      int64_t rank = ev.at("rank").get<int64_t>();
      if (rank < 0 || rank >= nranks) continue;  // script written for more ranks
      ScriptEvent se;
      se.t = ev.at("t").get<int64_t>();
      se.kind = ev.at("kind").get<std::string>();
      if (se.kind == "log") {
        se.stream = ev.value("stream", "stdout");
        se.text = ev.at("text").get<std::string>();
      } else if (se.kind == "exit") {
        se.code = ev.value("code", 0);
      } else if (se.kind == "file") {
        se.path = ev.at("path").get<std::string>();
        se.content = ev.value("content", "");
        se.exec = ev.value("exec", false);
      } else {
        fail(Errc::schema_invalid, "unknown sim event kind '" + se.kind + "'");
      }
      job.ranks[static_cast<size_t>(rank)].pending.push_back(std::move(se));
    }

  std::vector<std::string> runner_ids;
  for (int64_t r = 0; r < nranks; ++r) {
    auto& rank = job.ranks[static_cast<size_t>(r)];
    std::stable_sort(rank.pending.begin(), rank.pending.end(),
                     [](const ScriptEvent& a, const ScriptEvent& b) { return a.t < b.t; });
    bool has_exit = std::any_of(rank.pending.begin(), rank.pending.end(),
                                [](const ScriptEvent& e) { return e.kind == "exit"; });
    if (!has_exit) {
      ScriptEvent ex;
      ex.kind = "exit";
      ex.t = rank.pending.empty() ? 1 : rank.pending.back().t + 1;
      rank.pending.push_back(std::move(ex));
    }
    rank.env = rank_env(req, r);
    runner_ids.push_back(req.job_id + "/r" + std::to_string(r));

    TaskEvent started;
    started.kind = TaskEvent::Kind::started;
    started.job_id = req.job_id;
    started.rank = r;
    started.t = req.now_s;
    started.rank_seq = rank.next_seq++;
    out_.push_back(std::move(started));
  }

  jobs_[req.job_id] = std::move(job);
  now_ = std::max(now_, req.now_s);
  return runner_ids;
}

int64_t SimBackend::active_of(const SimJob& job, int64_t now_s) const {
  if (job.finished || job.suspended) return job.accrued_s;
  return job.accrued_s + std::max<int64_t>(0, now_s - job.resume_g);
}

StopAck SimBackend::ack_of(const SimJob& job, int64_t active_now) const {
  StopAck ack;
  ack.active_s = active_now - job.interval_start_s;
  ack.cpu_s = static_cast<double>(ack.active_s) * job.total_cpus;
  ack.gpu_s = static_cast<double>(ack.active_s) * job.total_gpus;
  return ack;
}

void SimBackend::advance_to(int64_t now_s) {
  now_ = std::max(now_, now_s);
  for (auto& [job_id, job] : jobs_) {
    if (job.finished || job.suspended) continue;
    int64_t active_now = job.accrued_s + (now_s - job.resume_g);
    bool all_exited = true;
    int64_t last_exit_active = 0;
    for (size_t r = 0; r < job.ranks.size(); ++r) {
      auto& rank = job.ranks[r];
      while (!rank.pending.empty() && rank.pending.front().t <= active_now && !rank.exited) {
        ScriptEvent se = rank.pending.front();
        rank.pending.erase(rank.pending.begin());
        int64_t g = job.resume_g + (se.t - job.accrued_s);  // active -> global time
        if (g < job.resume_g) g = job.resume_g;             // event scripted before this interval
        if (se.kind == "log") {
          TaskEvent ev;
          ev.kind = TaskEvent::Kind::log_line;
          ev.job_id = job_id;
          ev.rank = static_cast<int64_t>(r);
          ev.t = g;
          ev.rank_seq = rank.next_seq++;
          ev.stream = se.stream;
          ev.text = se.text;
          out_.push_back(std::move(ev));
        } else if (se.kind == "file") {
          rank.files[se.path] = {se.content, se.exec};
        } else {  // exit
          TaskEvent ev;
          ev.kind = TaskEvent::Kind::exited;
          ev.job_id = job_id;
          ev.rank = static_cast<int64_t>(r);
          ev.t = g;
          ev.rank_seq = rank.next_seq++;
          ev.exit_code = se.code;
          out_.push_back(std::move(ev));
          rank.exited = true;
          rank.pending.clear();
          last_exit_active = std::max(last_exit_active, se.t);
        }
      }
      if (!rank.exited) all_exited = false;
    }
    if (all_exited) {
      job.finished = true;
      // freeze the clock at the last exit, not the advance horizon
      job.accrued_s = last_exit_active;
    }
  }
}

std::vector<TaskEvent> SimBackend::drain_events() {
  std::stable_sort(out_.begin(), out_.end(), [](const TaskEvent& a, const TaskEvent& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.job_id != b.job_id) return a.job_id < b.job_id;
    if (a.rank != b.rank) return a.rank < b.rank;
    return a.rank_seq < b.rank_seq;
  });
  return std::exchange(out_, {});
}

StopAck SimBackend::stop(const std::string& job_id, int64_t grace_s, int64_t now_s) {
  (void)grace_s;  // virtual stop is immediate
  advance_to(now_s);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return {};
  SimJob& job = it->second;
  int64_t active_now = active_of(job, now_s);
  StopAck ack = ack_of(job, active_now);
  if (!job.finished) {
    job.accrued_s = active_now;
    job.finished = true;
    for (auto& rank : job.ranks) rank.pending.clear();
  }
  job.interval_start_s = job.accrued_s;  // never charge the same interval twice
  return ack;
}

StopAck SimBackend::suspend(const std::string& job_id, int64_t now_s) {
  advance_to(now_s);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return {};
  SimJob& job = it->second;
  int64_t active_now = active_of(job, now_s);
  StopAck ack = ack_of(job, active_now);
  if (!job.finished && !job.suspended) {
    job.accrued_s = active_now;
    job.suspended = true;
  }
  job.interval_start_s = job.accrued_s;
  return ack;
}

void SimBackend::resume(const std::string& job_id, int64_t now_s) {
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return;
  SimJob& job = it->second;
  if (job.finished || !job.suspended) return;
  job.suspended = false;
  job.resume_g = now_s;
  job.interval_start_s = job.accrued_s;
  now_ = std::max(now_, now_s);
}

std::vector<FetchedFile> SimBackend::fetch(const std::string& job_id, const std::string& glob) {
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return {};
  const SimJob& job = it->second;
  std::vector<FetchedFile> out;
  for (size_t r = 0; r < job.ranks.size(); ++r) {
    // the virtual working dir: bundle tree overlaid with scripted writes
    std::map<std::string, std::pair<std::string, bool>> files;
    for (const auto& e : job.manifest.entries) {
      if (e.mode == bundle::EntryMode::dir) continue;
      std::string content;
      for (const auto& c : e.chunks) content += cas_->get(c);
      files[e.path] = {std::move(content), e.mode == bundle::EntryMode::exec};
    }
    for (const auto& [path, v] : job.ranks[r].files) files[path] = v;
    for (const auto& [path, v] : files)
      if (glob_match(glob, path))
        out.push_back({static_cast<int64_t>(r), path, v.first, v.second});
  }
  return out;
}

bool SimBackend::has_job(const std::string& job_id) const { return jobs_.count(job_id) != 0; }

int64_t SimBackend::total_active_s(const std::string& job_id, int64_t now_s) const {
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return 0;
  return active_of(it->second, now_s);
}

std::map<std::string, std::string> SimBackend::runner_env(const std::string& job_id,
                                                          int64_t rank) const {
  auto it = jobs_.find(job_id);
  if (it == jobs_.end() || rank < 0 || rank >= static_cast<int64_t>(it->second.ranks.size()))
    return {};
  return it->second.ranks[static_cast<size_t>(rank)].env;
}

size_t SimBackend::live_rank_count() const {
  size_t n = 0;
  for (const auto& [_, job] : jobs_)
    if (!job.finished)
      for (const auto& rank : job.ranks)
        if (!rank.exited) ++n;
  return n;
}

}  // namespace tacc::exec
