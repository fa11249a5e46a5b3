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

#include "tacc/exec_local.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <utility>

#include "tacc/errors.hpp"
#include "tacc/util.hpp"

namespace tacc::exec {

namespace fs = std::filesystem;

LocalProcessBackend::LocalProcessBackend(std::string name, sched::ResourceReq max_per_node,
                                         const bundle::Cas* cas, fs::path work_root)
    : cas_(cas), work_root_(std::move(work_root)) {
  desc_.name = std::move(name);
  desc_.kind = "local_process";
  desc_.max_per_node = max_per_node;
  desc_.features = {"host"};
  fs::create_directories(work_root_);
}

LocalProcessBackend::~LocalProcessBackend() {
  std::vector<Rank*> ranks;
  {
    std::lock_guard<std::mutex> lk(mu_);
    for (auto& [id, job] : jobs_)
      for (auto& r : job.ranks) ranks.push_back(r.get());
  }
  for (Rank* r : ranks)
    if (!r->exited.load()) ::kill(-r->pid, SIGKILL);
  for (Rank* r : ranks)
    if (r->reader.joinable()) r->reader.join();
}

void LocalProcessBackend::push_event(TaskEvent ev) {
  std::lock_guard<std::mutex> lk(mu_);
  events_.push_back(std::move(ev));
}

std::vector<std::string> LocalProcessBackend::provision(const ProvisionRequest& req) {
  int64_t nranks = static_cast<int64_t>(req.placement.size());
  if (nranks == 0) fail(Errc::provision_failed, "empty placement for " + req.job_id);

  // A re-provision replaces any earlier incarnation; make sure its
  // processes and readers are fully gone before touching the tree.
  std::vector<Rank*> stale;
  {
    std::lock_guard<std::mutex> lk(mu_);
    if (auto it = jobs_.find(req.job_id); it != jobs_.end())
      for (auto& r : it->second.ranks) stale.push_back(r.get());
  }
  for (Rank* r : stale)
    if (!r->exited.load()) ::kill(-r->pid, SIGKILL);
  for (Rank* r : stale)
    if (r->reader.joinable()) r->reader.join();

  fs::path job_dir = work_root_ / req.job_id;
  std::error_code ec;
  fs::remove_all(job_dir, ec);  // a re-provision starts from a clean tree

  std::vector<fs::path> dirs;
  for (int64_t r = 0; r < nranks; ++r) {
    fs::path d = job_dir / ("rank" + std::to_string(r));
    fs::create_directories(d, ec);
    if (ec) fail(Errc::provision_failed, "cannot create " + d.string() + ": " + ec.message());
    bundle::materialize(req.manifest, *cas_, d);
    dirs.push_back(d);
  }

  LocalJob job;
  job.resume_g = wall_now_s();
  job.provisioned_g = job.resume_g;
  for (const auto& [node, per] : req.placement) {
    job.total_cpus += per.cpus;
    job.total_gpus += per.gpus;
  }

  std::vector<std::string> runners;
  std::vector<std::pair<int, int>> read_fds;  // per rank: stdout, stderr
  for (int64_t r = 0; r < nranks; ++r) {
    auto env = rank_env(req, r);
    // the entrypoint still needs a usable base environment
    for (const char* key : {"PATH", "HOME", "LANG"}) {
      if (const char* v = ::getenv(key); v && !env.count(key)) env[key] = v;
    }
    std::vector<std::string> env_flat;
    env_flat.reserve(env.size());
    for (const auto& [k, v] : env) env_flat.push_back(k + "=" + v);
    std::vector<char*> envp;
    for (auto& s : env_flat) envp.push_back(s.data());
    envp.push_back(nullptr);

    int out_pipe[2] = {-1, -1};
    int err_pipe[2] = {-1, -1};
    if (::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0)
      fail(Errc::provision_failed, std::string("pipe: ") + std::strerror(errno));

    pid_t pid = ::fork();
    if (pid < 0) fail(Errc::provision_failed, std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
      ::setpgid(0, 0);  // own process group, so stop() can signal descendants too
      if (::chdir(dirs[r].c_str()) != 0) _exit(127);
      ::dup2(out_pipe[1], STDOUT_FILENO);
      ::dup2(err_pipe[1], STDERR_FILENO);
      for (int fd = 3; fd < 256; ++fd) ::close(fd);
      ::execle("/bin/sh", "sh", "-c", req.entrypoint.c_str(), static_cast<char*>(nullptr),
               envp.data());
      _exit(127);
    }
    ::setpgid(pid, pid);  // parent side of the race
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);

    auto rank = std::make_unique<Rank>();
    rank->pid = pid;
    rank->dir = dirs[r];
    job.ranks.push_back(std::move(rank));
    read_fds.emplace_back(out_pipe[0], err_pipe[0]);
    runners.push_back(req.job_id + "/r" + std::to_string(r));
  }

  // Publish the job before any reader can observe an exit, then start the
  // readers against the now-stable Rank objects.
  std::vector<Rank*> raws;
  {
    std::lock_guard<std::mutex> lk(mu_);
    auto [it, inserted] = jobs_.insert_or_assign(req.job_id, std::move(job));
    (void)inserted;
    for (auto& r : it->second.ranks) raws.push_back(r.get());
  }
  for (int64_t r = 0; r < nranks; ++r) {
    raws[r]->reader = std::thread(&LocalProcessBackend::reader_loop, this, req.job_id, r, raws[r],
                                  read_fds[r].first, read_fds[r].second);
    TaskEvent started;
    started.kind = TaskEvent::Kind::started;
    started.job_id = req.job_id;
    started.rank = r;
    started.t = wall_now_s();
    started.rank_seq = 0;
    push_event(std::move(started));
  }
  return runners;
}

void LocalProcessBackend::reader_loop(std::string job_id, int64_t rank, Rank* rk, int out_fd,
                                      int err_fd) {
  struct Src {
    int fd;
    const char* stream;
    std::string buf;
    bool open = true;
  };
  Src srcs[2] = {{out_fd, "stdout", {}, true}, {err_fd, "stderr", {}, true}};
  uint64_t seq = 1;

  auto emit = [&](const char* stream, std::string line) {
    TaskEvent ev;
    ev.kind = TaskEvent::Kind::log_line;
    ev.job_id = job_id;
    ev.rank = rank;
    ev.t = wall_now_s();
    ev.rank_seq = seq++;
    ev.stream = stream;
    ev.text = std::move(line);
    push_event(std::move(ev));
  };

  while (srcs[0].open || srcs[1].open) {
    pollfd pfds[2];
    nfds_t n = 0;
    for (Src& s : srcs)
      if (s.open) pfds[n++] = {s.fd, POLLIN, 0};
    if (::poll(pfds, n, -1) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    nfds_t pi = 0;
    for (Src& s : srcs) {
      if (!s.open) continue;
      pollfd& p = pfds[pi++];
      if (!(p.revents & (POLLIN | POLLHUP | POLLERR))) continue;
      char tmp[4096];
      ssize_t k = ::read(s.fd, tmp, sizeof(tmp));
      if (k > 0) {
        s.buf.append(tmp, static_cast<size_t>(k));
        size_t pos;
        while ((pos = s.buf.find('\n')) != std::string::npos) {
          emit(s.stream, s.buf.substr(0, pos));
          s.buf.erase(0, pos + 1);
        }
      } else {
        if (!s.buf.empty()) emit(s.stream, std::exchange(s.buf, {}));
        s.open = false;
        ::close(s.fd);
      }
    }
  }

  int status = 0;
  while (::waitpid(rk->pid, &status, 0) < 0 && errno == EINTR) {
  }
  int64_t code = WIFEXITED(status) ? WEXITSTATUS(status)
                                   : (WIFSIGNALED(status) ? 128 + WTERMSIG(status) : 127);

  TaskEvent ev;
  ev.kind = TaskEvent::Kind::exited;
  ev.job_id = job_id;
  ev.rank = rank;
  ev.t = wall_now_s();
  ev.rank_seq = seq;
  ev.exit_code = code;

  std::lock_guard<std::mutex> lk(mu_);
  rk->exited.store(true);
  auto it = jobs_.find(job_id);
  if (it != jobs_.end()) {
    LocalJob& job = it->second;
    bool all = std::all_of(job.ranks.begin(), job.ranks.end(),
                           [](const auto& r) { return r->exited.load(); });
    if (all && !job.stopped && !job.suspended) {
      job.accrued_s += std::max<int64_t>(0, ev.t - job.resume_g);
      job.stopped = true;  // natural completion freezes the clock
    }
  }
  events_.push_back(std::move(ev));
}

std::vector<TaskEvent> LocalProcessBackend::drain_events() {
  std::lock_guard<std::mutex> lk(mu_);
  std::stable_sort(events_.begin(), events_.end(), [](const TaskEvent& a, const TaskEvent& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.job_id != b.job_id) return a.job_id < b.job_id;
    if (a.rank != b.rank) return a.rank < b.rank;
    return a.rank_seq < b.rank_seq;
  });
  return std::exchange(events_, {});
}

StopAck LocalProcessBackend::ack_job(LocalJob& job, int64_t now_wall) {
  int64_t active_now =
      (job.stopped || job.suspended)
          ? job.accrued_s
          : job.accrued_s + std::max<int64_t>(0, now_wall - job.resume_g);
  StopAck ack;
  ack.active_s = active_now - job.interval_start_s;
  ack.cpu_s = static_cast<double>(ack.active_s) * job.total_cpus;
  ack.gpu_s = static_cast<double>(ack.active_s) * job.total_gpus;
  job.accrued_s = active_now;
  job.interval_start_s = active_now;
  return ack;
}

StopAck LocalProcessBackend::stop(const std::string& job_id, int64_t grace_s, int64_t now_s) {
  (void)now_s;  // real processes run in wall time
  std::vector<Rank*> ranks;
  {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) fail(Errc::not_found, "no job " + job_id + " on " + desc_.name);
    for (auto& r : it->second.ranks) ranks.push_back(r.get());
  }

  bool any_live = false;
  for (Rank* r : ranks) {
    if (r->exited.load()) continue;
    any_live = true;
    ::kill(-r->pid, SIGCONT);  // a suspended group cannot act on SIGTERM
    ::kill(-r->pid, SIGTERM);
  }
  if (any_live) {
    auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(grace_s);
    while (std::chrono::steady_clock::now() < deadline) {
      if (std::all_of(ranks.begin(), ranks.end(), [](Rank* r) { return r->exited.load(); }))
        break;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    for (Rank* r : ranks)
      if (!r->exited.load()) ::kill(-r->pid, SIGKILL);
  }
  for (Rank* r : ranks)
    if (r->reader.joinable()) r->reader.join();

  std::lock_guard<std::mutex> lk(mu_);
  LocalJob& job = jobs_[job_id];
  StopAck ack = ack_job(job, wall_now_s());
  job.stopped = true;
  job.suspended = false;
  return ack;
}

StopAck LocalProcessBackend::suspend(const std::string& job_id, int64_t now_s) {
  (void)now_s;
  std::lock_guard<std::mutex> lk(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) fail(Errc::not_found, "no job " + job_id + " on " + desc_.name);
  LocalJob& job = it->second;
  StopAck ack = ack_job(job, wall_now_s());
  if (!job.stopped && !job.suspended) {
    job.suspended = true;
    for (auto& r : job.ranks)
      if (!r->exited.load()) ::kill(-r->pid, SIGSTOP);
  }
  return ack;
}

void LocalProcessBackend::resume(const std::string& job_id, int64_t now_s) {
  (void)now_s;
  std::lock_guard<std::mutex> lk(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) fail(Errc::not_found, "no job " + job_id + " on " + desc_.name);
  LocalJob& job = it->second;
  if (job.stopped || !job.suspended) return;
  job.suspended = false;
  job.resume_g = wall_now_s();
  job.interval_start_s = job.accrued_s;
  for (auto& r : job.ranks)
    if (!r->exited.load()) ::kill(-r->pid, SIGCONT);
}

std::vector<FetchedFile> LocalProcessBackend::fetch(const std::string& job_id,
                                                    const std::string& glob) {
  std::vector<fs::path> dirs;
  {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) fail(Errc::not_found, "no job " + job_id + " on " + desc_.name);
    for (auto& r : it->second.ranks) dirs.push_back(r->dir);
  }
  std::vector<FetchedFile> out;
  for (size_t rank = 0; rank < dirs.size(); ++rank) {
    if (!fs::exists(dirs[rank])) continue;
    std::vector<std::string> rels;
    for (auto it = fs::recursive_directory_iterator(dirs[rank]);
         it != fs::recursive_directory_iterator(); ++it) {
      if (!it->is_regular_file()) continue;
      rels.push_back(fs::relative(it->path(), dirs[rank]).generic_string());
    }
    std::sort(rels.begin(), rels.end());
    for (const auto& rel : rels) {
      if (!glob_match(glob, rel)) continue;
      FetchedFile f;
      f.rank = static_cast<int64_t>(rank);
      f.path = rel;
      f.content = read_file(dirs[rank] / rel);
      auto perms = fs::status(dirs[rank] / rel).permissions();
      f.exec = (perms & fs::perms::owner_exec) != fs::perms::none;
      out.push_back(std::move(f));
    }
  }
  return out;
}

bool LocalProcessBackend::has_job(const std::string& job_id) const {
  std::lock_guard<std::mutex> lk(mu_);
  return jobs_.count(job_id) > 0;
}

}  // namespace tacc::exec
