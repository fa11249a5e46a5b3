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

#include "tacc/controller.hpp"

#include <algorithm>
#include <cstdio>

#include "tacc/errors.hpp"
#include "tacc/exec_local.hpp"
#include "tacc/exec_sim.hpp"
#include "tacc/util.hpp"

namespace fs = std::filesystem;

namespace tacc::controld {

// ---- config ----

namespace {

sched::ResourceReq req_from_json(const json& doc) {
  return {doc.at("cpus").get<int64_t>(), doc.at("gpus").get<int64_t>(),
          doc.at("mem_mib").get<int64_t>()};
}

json req_to_json(const sched::ResourceReq& r) {
  return {{"cpus", r.cpus}, {"gpus", r.gpus}, {"mem_mib", r.mem_mib}};
}

}  // namespace

ControllerConfig ControllerConfig::from_json(const json& doc) {
  ControllerConfig c;
  if (!doc.is_object()) fail(Errc::schema_invalid, "config must be an object");
  try {
    for (const auto& n : doc.at("nodes"))
      c.nodes.push_back({n.at("name").get<std::string>(), req_from_json(n.at("capacity"))});
    for (const auto& b : doc.at("backends"))
      c.backends.push_back({b.at("name").get<std::string>(), b.at("kind").get<std::string>(),
                            req_from_json(b.at("max_per_node"))});
    if (doc.contains("selection_rules"))
      c.selection_rules = exec::SelectionRules::from_json(doc.at("selection_rules"));
    if (doc.contains("probe_interval_s"))
      c.probe_interval_s = doc.at("probe_interval_s").get<int64_t>();
    if (doc.contains("preempt_grace_s"))
      c.preempt_grace_s = doc.at("preempt_grace_s").get<int64_t>();
  } catch (const json::exception& ex) {
    fail(Errc::schema_invalid, std::string("malformed config: ") + ex.what());
  }
  if (c.nodes.empty()) fail(Errc::schema_invalid, "at least one node required", "nodes");
  if (c.backends.empty()) fail(Errc::schema_invalid, "at least one backend required", "backends");
  for (const auto& b : c.backends)
    if (b.kind != "simulated" && b.kind != "local_process")
      fail(Errc::schema_invalid, "unknown backend kind '" + b.kind + "'", "backends");
  return c;
}

json ControllerConfig::to_json() const {
  json jn = json::array();
  for (const auto& n : nodes) jn.push_back({{"name", n.name}, {"capacity", req_to_json(n.capacity)}});
  json jb = json::array();
  for (const auto& b : backends)
    jb.push_back({{"name", b.name}, {"kind", b.kind}, {"max_per_node", req_to_json(b.max_per_node)}});
  return {{"nodes", std::move(jn)},
          {"backends", std::move(jb)},
          {"selection_rules", selection_rules.to_json()},
          {"probe_interval_s", probe_interval_s},
          {"preempt_grace_s", preempt_grace_s}};
}

schema::ClusterLimits ControllerConfig::limits() const {
  schema::ClusterLimits lim;
  for (const auto& n : nodes) {
    lim.max_node.cpus = std::max(lim.max_node.cpus, n.capacity.cpus);
    lim.max_node.gpus = std::max(lim.max_node.gpus, n.capacity.gpus);
    lim.max_node.mem_mib = std::max(lim.max_node.mem_mib, n.capacity.mem_mib);
    lim.total += n.capacity;
  }
  lim.node_count = static_cast<int64_t>(nodes.size());
  return lim;
}

// ---- construction / recovery ----

Controller::Controller(fs::path state_dir, ControllerConfig config, sched::Policy policy)
    : state_dir_(std::move(state_dir)),
      cfg_(std::move(config)),
      policy_(std::move(policy)),
      cas_(state_dir_ / "cas") {
  auto rec = recover(state_dir_);
  st_ = std::move(rec.state);
  corrupt_seq_ = rec.corrupt_at_seq;
  if (corrupt_seq_) {
    // Drop the undecodable tail so appends continue after the last record
    // that actually reached the state. Records already covered by the
    // snapshot stay in the log untouched.
    auto valid = read_log(state_dir_ / "events.log");
    std::string buf;
    for (const auto& e : valid.events)
      if (e.seq <= st_.last_seq) buf += encode_record(e);
    write_file_atomic(state_dir_ / "events.log", buf);
  }
  log_ = std::make_unique<EventLog>(state_dir_ / "events.log");

  for (const auto& bc : cfg_.backends) {
    if (bc.kind == "simulated") {
      registry_.add(std::make_shared<exec::SimBackend>(bc.name, bc.max_per_node, &cas_));
    } else {
      registry_.add(std::make_shared<exec::LocalProcessBackend>(bc.name, bc.max_per_node, &cas_,
                                                                state_dir_ / "work" / bc.name));
    }
  }

  now_s_ = st_.last_decay_t;

  // Anything mid-flight at the last shutdown lost its runners; requeue it.
  // Gangs dissolve with their running members and reform on demand.
  std::vector<std::string> ids;
  for (const auto& [id, job] : st_.jobs) ids.push_back(id);
  for (const auto& id : ids) {
    switch (st_.jobs.at(id).state) {
      case JobState::Provisioning:
        emit(ev_enqueued(next_seq(), now_s_, id));
        break;
      case JobState::Running:
      case JobState::Suspended:
        emit(ev_preempted(next_seq(), now_s_, id, 0, 0.0));
        emit(ev_enqueued(next_seq(), now_s_, id));
        break;
      default:
        break;
    }
  }
  std::vector<std::string> gids;
  for (const auto& [gid, g] : st_.gangs) gids.push_back(gid);
  for (const auto& gid : gids) emit(ev_gang_deleted(next_seq(), now_s_, gid));
}

void Controller::emit(Event e) {
  apply_event(st_, e);  // throws before anything hits the log
  log_->append(e);
  if (st_.last_seq % kSnapshotEvery == 0) write_snapshot(state_dir_, st_);
}

void Controller::finish_logs(const std::string& job_id) { logs_.mark_terminal(job_id); }

double Controller::charge_of(const exec::StopAck& ack) const {
  return ack.gpu_s + policy_.usage_cpu_weight * ack.cpu_s;
}

std::set<std::string> Controller::down_set() const {
  std::set<std::string> s;
  for (const auto& [b, _] : st_.backend_down_since) s.insert(b);
  return s;
}

bundle::BundleManifest Controller::load_manifest(const Digest& bundle_id) const {
  return bundle::BundleManifest::from_text(cas_.manifest_text(bundle_id));
}

exec::StopAck Controller::stop_backend(const JobRecord& job, int64_t grace_s) {
  exec::Backend* b = registry_.find(job.backend);
  if (!b || !b->has_job(job.job_id)) return {};
  return b->stop(job.job_id, grace_s, now_s_);
}

bool Controller::in_gang(const std::string& job_id) const {
  for (const auto& [_, g] : st_.gangs)
    if (std::find(g.members.begin(), g.members.end(), job_id) != g.members.end()) return true;
  return false;
}

int64_t Controller::remaining_estimate(const JobRecord& job) const {
  return std::max<int64_t>(1, job.walltime_estimate_s - job.active_accrued_s);
}

sched::Accounts Controller::build_accounts() const {
  std::set<std::string> users;
  for (const auto& [u, _] : policy_.share_weights) users.insert(u);
  for (const auto& [u, _] : policy_.quotas) users.insert(u);
  for (const auto& [u, _] : st_.usage) users.insert(u);
  for (const auto& [_, job] : st_.jobs) users.insert(job.user);
  sched::Accounts accounts;
  for (const auto& u : users) {
    sched::AccountState a = policy_.account_defaults(u);
    auto it = st_.usage.find(u);
    a.usage = it == st_.usage.end() ? 0.0 : it->second;
    accounts.emplace(u, std::move(a));
  }
  return accounts;
}

// ---- submit / kill ----

std::string Controller::submit(const json& spec_doc, const std::string& manifest_hex) {
  schema::TaskSpec spec = schema::parse(spec_doc);
  schema::validate_or_throw(spec, cfg_.limits());

  std::lock_guard lk(mu_);

  sched::AccountState acct = policy_.account_defaults(spec.user);
  int64_t waiting = 0;
  for (const auto& [_, job] : st_.jobs)
    if (job.user == spec.user &&
        (job.state == JobState::Submitted || job.state == JobState::Compiling ||
         job.state == JobState::Queued))
      ++waiting;
  if (!sched::quota_admits_enqueue(acct.quota, waiting))
    fail(Errc::quota_exceeded,
         "user '" + spec.user + "' already has " + std::to_string(waiting) + " jobs waiting");

  Digest bundle_id;
  try {
    bundle_id = Digest::from_hex(manifest_hex);
  } catch (const Error&) {
    fail(Errc::protocol_error, "manifest must be a 64-hex bundle id");
  }
  if (!cas_.has_manifest(bundle_id))
    fail(Errc::protocol_error, "bundle manifest " + manifest_hex + " has not been uploaded");
  bundle::BundleManifest manifest = load_manifest(bundle_id);
  if (manifest.spec_hash != schema::spec_hash(spec))
    fail(Errc::schema_invalid, "bundle manifest was built for a different spec");
  for (const Digest& d : manifest.object_set())
    if (!cas_.has(d))
      fail(Errc::protocol_error, "bundle object " + d.hex() + " has not been uploaded");

  char idbuf[16];
  std::snprintf(idbuf, sizeof idbuf, "%08llu",
                static_cast<unsigned long long>(st_.next_job_num));
  JobRecord job;
  job.job_id = idbuf;
  job.user = spec.user;
  job.name = spec.name;
  job.spec_hash = schema::spec_hash(spec);
  job.bundle_id = bundle_id;
  job.spec_canonical = schema::canonicalize(spec);
  job.qos = spec.qos;
  job.per_node = spec.resources;
  job.nodes = spec.nodes;
  job.walltime_estimate_s = spec.walltime_estimate_s;
  emit(ev_submitted(next_seq(), now_s_, job));
  return job.job_id;
}

void Controller::kill(const std::string& job_id) {
  std::lock_guard lk(mu_);
  auto it = st_.jobs.find(job_id);
  if (it == st_.jobs.end()) fail(Errc::not_found, "unknown job '" + job_id + "'");
  JobRecord& job = it->second;
  switch (job.state) {
    case JobState::Queued:
      emit(ev_killed(next_seq(), now_s_, job_id, "user_request", 0, 0.0));
      finish_logs(job_id);
      break;
    case JobState::Running:
    case JobState::Suspended: {
      exec::StopAck ack = stop_backend(job, cfg_.preempt_grace_s);
      emit(ev_killed(next_seq(), now_s_, job_id, "user_request", ack.active_s, charge_of(ack)));
      finish_logs(job_id);
      break;
    }
    default:
      fail(Errc::state_conflict,
           "job '" + job_id + "' is " + job_state_name(job.state) + ", cannot kill");
  }
}

// ---- the tick pipeline ----

void Controller::tick(int64_t now_s) {
  std::lock_guard lk(mu_);
  now_s_ = std::max(now_s_, now_s);
  drain_backends();
  decay_usage();
  run_compiles();
  enforce_walltimes();
  run_schedule();
  maintain_gangs();
  probe_backends();
}

void Controller::drain_backends() {
  for (const auto& b : registry_.all()) {
    b->advance_to(now_s_);
    for (const auto& ev : b->drain_events()) handle_task_event(*b, ev);
  }
}

void Controller::handle_task_event(exec::Backend& b, const exec::TaskEvent& ev) {
  auto it = st_.jobs.find(ev.job_id);
  if (it == st_.jobs.end()) return;
  JobRecord& job = it->second;
  // Stale events from a previous incarnation (the job moved on after a
  // preempt or kill) carry usage already captured by the stop ack.
  if (job.backend != b.descriptor().name) return;

  switch (ev.kind) {
    case exec::TaskEvent::Kind::log_line:
      if (!is_terminal(job.state))
        logs_.append(ev.job_id, ev.t, ev.rank, ev.stream, ev.text, ev.rank_seq);
      break;

    case exec::TaskEvent::Kind::started:
      if (job.state == JobState::Running)
        emit(ev_rank_started(next_seq(), ev.t, ev.job_id, ev.rank));
      break;

    case exec::TaskEvent::Kind::exited: {
      if (job.state != JobState::Running) break;  // raced a kill; the ack charged already
      bool final_rank = job.exit_codes.count(ev.rank) == 0 &&
                        static_cast<int64_t>(job.exit_codes.size()) + 1 >= job.nodes;
      int64_t active = 0;
      double charge = 0.0;
      if (final_rank) {
        // settle the whole job's interval in one ack on the last exit
        exec::StopAck ack = b.stop(ev.job_id, 0, now_s_);
        active = ack.active_s;
        charge = charge_of(ack);
      }
      emit(ev_rank_exited(next_seq(), ev.t, ev.job_id, ev.rank, ev.exit_code, active, charge));
      if (final_rank) finish_logs(ev.job_id);
      break;
    }

    case exec::TaskEvent::Kind::failed:
      break;  // runner-level failures surface through exit codes
  }
}

void Controller::decay_usage() {
  if (now_s_ <= st_.last_decay_t) return;
  emit(ev_usage_decayed(next_seq(), now_s_, static_cast<double>(now_s_ - st_.last_decay_t),
                        policy_.half_life_s));
}

void Controller::run_compiles() {
  std::vector<std::string> ids;
  for (const auto& [id, job] : st_.jobs)
    if (job.state == JobState::Submitted) ids.push_back(id);
  for (const auto& id : ids) {
    emit(ev_compile_started(next_seq(), now_s_, id));
    const JobRecord& job = st_.jobs.at(id);
    try {
      schema::TaskSpec spec = schema::parse_text(job.spec_canonical);
      bundle::BundleManifest manifest = load_manifest(job.bundle_id);
      auto chars = bundle::static_characteristics(spec, manifest);
      exec::SelectionTrace trace = exec::select_backend(
          spec, chars, spec.walltime_estimate_s, registry_, down_set(), cfg_.selection_rules);
      emit(ev_compiled_ok(next_seq(), now_s_, id, trace.to_json()));
    } catch (const Error& e) {
      emit(ev_compiled_failed(next_seq(), now_s_, id, errc_name(e.code()), e.message()));
      finish_logs(id);
    }
  }
}

void Controller::enforce_walltimes() {
  std::vector<std::string> ids;
  for (const auto& [id, job] : st_.jobs)
    if (job.state == JobState::Running) ids.push_back(id);
  for (const auto& id : ids) {
    const JobRecord& job = st_.jobs.at(id);
    int64_t active = job.active_accrued_s + (now_s_ - job.start_time_s);
    if (static_cast<double>(active) <
        policy_.walltime_grace * static_cast<double>(job.walltime_estimate_s))
      continue;
    exec::StopAck ack = stop_backend(job, 0);
    emit(ev_killed(next_seq(), now_s_, id, "walltime_exceeded", ack.active_s, charge_of(ack)));
    finish_logs(id);
  }
}

void Controller::run_schedule() {
  sched::ClusterState cluster;
  cluster.now = now_s_;
  for (const auto& nc : cfg_.nodes) cluster.nodes.push_back({nc.name, nc.capacity, {}});

  sched::Accounts accounts = build_accounts();

  std::vector<sched::RunningInfo> running;
  for (const auto& [id, job] : st_.jobs) {
    if (job.state != JobState::Running) continue;
    sched::QueueEntry as_entry{id,        job.user,
                               job.qos,   job.per_node,
                               job.nodes, job.walltime_estimate_s,
                               job.submit_time_s};
    sched::RunningInfo info;
    info.job_id = id;
    info.user = job.user;
    info.qos = job.qos;
    info.priority = sched::compute_priority(as_entry, accounts, now_s_, policy_.weights);
    info.start_time_s = job.start_time_s;
    info.placement = job.placement;
    running.push_back(std::move(info));
    for (const auto& [node, req] : job.placement)
      for (auto& ns : cluster.nodes)
        if (ns.name == node) {
          ns.allocations.push_back({id, req, job.est_end_s});
          break;
        }
  }

  std::vector<sched::QueueEntry> queue;
  for (const auto& [id, job] : st_.jobs) {
    if (job.state != JobState::Queued || in_gang(id)) continue;
    queue.push_back({id, job.user, job.qos, job.per_node, job.nodes, remaining_estimate(job),
                     job.submit_time_s});
  }
  sched::prioritize(queue, accounts, now_s_, policy_.weights);

  sched::ScheduleDecision decision =
      sched::schedule_cycle(queue, cluster, accounts, running, policy_);
  if (decision.empty()) return;
  emit(ev_decision_applied(next_seq(), now_s_, decision.to_json()));

  for (const auto& victim : decision.preemptions) preempt_job(victim);
  for (const auto& s : decision.starts) {
    if (st_.jobs.at(s.job_id).state != JobState::Queued) continue;
    provision_job(s.job_id, s.placement, s.est_end_s);
  }
}

void Controller::preempt_job(const std::string& victim) {
  // A gang falls together: its members time-slice the same partition, so
  // evicting one slice invalidates the whole rotation.
  std::optional<sched::Gang> gang;
  for (const auto& [gid, g] : st_.gangs)
    if (std::find(g.members.begin(), g.members.end(), victim) != g.members.end()) {
      gang = g;
      break;
    }

  std::vector<std::string> targets = gang ? gang->members : std::vector<std::string>{victim};
  for (const auto& id : targets) {
    auto it = st_.jobs.find(id);
    if (it == st_.jobs.end()) continue;
    JobRecord& job = it->second;
    if (job.state != JobState::Running && job.state != JobState::Suspended) continue;
    exec::StopAck ack = stop_backend(job, cfg_.preempt_grace_s);
    emit(ev_preempted(next_seq(), now_s_, id, ack.active_s, charge_of(ack)));
    emit(ev_enqueued(next_seq(), now_s_, id));
  }
  if (gang) emit(ev_gang_deleted(next_seq(), now_s_, gang->id));
}

bool Controller::provision_job(const std::string& job_id, const sched::Placement& placement,
                               int64_t est_end_s) {
  const JobRecord& job = st_.jobs.at(job_id);
  exec::SelectionTrace trace = exec::SelectionTrace::from_json(job.selection_trace);
  schema::TaskSpec spec = schema::parse_text(job.spec_canonical);
  bundle::BundleManifest manifest = load_manifest(job.bundle_id);

  std::set<std::string> attempted;
  while (true) {
    auto next = exec::failover_next(trace, attempted, down_set());
    if (!next) {
      if (attempted.empty()) return false;  // everything is down; retry next tick
      emit(ev_provision_failed(next_seq(), now_s_, job_id,
                               "no healthy backend remains for this request", true));
      finish_logs(job_id);
      return false;
    }
    attempted.insert(*next);
    emit(ev_provision_started(next_seq(), now_s_, job_id, *next, placement, est_end_s));
    try {
      exec::Backend* b = registry_.find(*next);
      if (!b) fail(Errc::provision_failed, "backend missing from the registry");
      exec::ProvisionRequest req;
      req.job_id = job_id;
      req.manifest = manifest;
      req.placement = placement;
      req.env = spec.env;
      req.entrypoint = manifest.entrypoint;
      req.now_s = now_s_;
      std::vector<std::string> runners = b->provision(req);
      emit(ev_provisioned(next_seq(), now_s_, job_id, runners));
      return true;
    } catch (const Error& e) {
      emit(ev_backend_health(next_seq(), now_s_, *next, false));
      emit(ev_provision_failed(next_seq(), now_s_, job_id, e.message(), false));
    }
  }
}

// ---- gangs ----

bool Controller::resume_member(const std::string& job_id, const sched::Placement& partition) {
  JobRecord& job = st_.jobs.at(job_id);
  if (job.state == JobState::Suspended) {
    exec::Backend* b = registry_.find(job.backend);
    if (!b || !b->has_job(job_id)) {
      // the runner is gone; send it back through the scheduler
      emit(ev_preempted(next_seq(), now_s_, job_id, 0, 0.0));
      emit(ev_enqueued(next_seq(), now_s_, job_id));
      return false;
    }
    emit(ev_resumed(next_seq(), now_s_, job_id, partition, now_s_ + remaining_estimate(job)));
    b->resume(job_id, now_s_);
    return true;
  }
  if (job.state == JobState::Queued)
    return provision_job(job_id, partition, now_s_ + remaining_estimate(job));
  return false;
}

void Controller::rotate_to(sched::Gang gang, const std::string& next) {
  auto it = st_.jobs.find(gang.active);
  if (it != st_.jobs.end() && it->second.state == JobState::Running) {
    JobRecord& active = it->second;
    exec::Backend* b = registry_.find(active.backend);
    exec::StopAck ack;
    if (b && b->has_job(gang.active)) ack = b->suspend(gang.active, now_s_);
    emit(ev_suspended(next_seq(), now_s_, gang.active, ack.active_s, charge_of(ack)));
  }
  // advance even when the resume fails: pruning converges next tick
  resume_member(next, gang.partition);
  gang.active = next;
  gang.last_switch_s = now_s_;
  emit(ev_gang_changed(next_seq(), now_s_, gang));
}

void Controller::maintain_gangs() {
  std::vector<std::string> gids;
  for (const auto& [gid, _] : st_.gangs) gids.push_back(gid);

  for (const auto& gid : gids) {
    auto git = st_.gangs.find(gid);
    if (git == st_.gangs.end()) continue;
    const std::vector<std::string> orig = git->second.members;
    sched::Gang gang = git->second;

    std::vector<std::string> members;
    for (const auto& m : gang.members) {
      auto jit = st_.jobs.find(m);
      if (jit == st_.jobs.end()) continue;
      JobState s = jit->second.state;
      if (s == JobState::Running || s == JobState::Suspended || s == JobState::Queued)
        members.push_back(m);
    }

    if (members.size() <= 1) {
      emit(ev_gang_deleted(next_seq(), now_s_, gid));
      if (members.size() == 1 && st_.jobs.at(members[0]).state == JobState::Suspended)
        resume_member(members[0], gang.partition);  // survivor takes the partition back
      continue;
    }

    bool pruned = members != gang.members;
    gang.members = members;

    auto ait = st_.jobs.find(gang.active);
    bool active_running = ait != st_.jobs.end() && ait->second.state == JobState::Running &&
                          std::find(members.begin(), members.end(), gang.active) != members.end();

    bool want_rotate = !active_running;
    if (active_running && !sched::gang_rotate(gang, now_s_, policy_.quantum_s).empty())
      want_rotate = true;

    if (want_rotate) {
      // successor: next surviving member after the incumbent's slot in the
      // pre-prune rotation order
      std::string next;
      size_t start = 0;
      for (size_t i = 0; i < orig.size(); ++i)
        if (orig[i] == gang.active) {
          start = i;
          break;
        }
      for (size_t k = 1; k <= orig.size() && next.empty(); ++k) {
        const std::string& cand = orig[(start + k) % orig.size()];
        if (cand == gang.active) continue;
        if (std::find(members.begin(), members.end(), cand) == members.end()) continue;
        JobState s = st_.jobs.at(cand).state;
        if (s == JobState::Suspended || s == JobState::Queued) next = cand;
      }
      if (!next.empty()) {
        rotate_to(std::move(gang), next);
        continue;
      }
    }

    if (pruned) emit(ev_gang_changed(next_seq(), now_s_, gang));
  }

  form_gangs();
}

void Controller::form_gangs() {
  // Time-slicing pools: queued preemptible work of the same shape shares
  // a running preemptible incumbent's slice instead of waiting behind it.
  sched::Accounts accounts = build_accounts();
  std::vector<std::string> incumbents;
  for (const auto& [id, job] : st_.jobs)
    if (job.state == JobState::Running && job.qos == schema::Qos::preemptible && !in_gang(id))
      incumbents.push_back(id);

  for (const auto& rid : incumbents) {
    const JobRecord& rjob = st_.jobs.at(rid);
    if (rjob.state != JobState::Running || in_gang(rid)) continue;

    std::vector<std::string> joiners;
    for (const auto& [qid, qjob] : st_.jobs) {
      if (qjob.state != JobState::Queued || qjob.qos != schema::Qos::preemptible) continue;
      if (in_gang(qid)) continue;
      if (qjob.per_node != rjob.per_node || qjob.nodes != rjob.nodes) continue;
      int64_t running_gpus = 0;
      for (const auto& [oid, ojob] : st_.jobs)
        if (ojob.user == qjob.user && ojob.state == JobState::Running)
          running_gpus += ojob.per_node.gpus * ojob.nodes;
      sched::QueueEntry entry{qid,        qjob.user,
                              qjob.qos,   qjob.per_node,
                              qjob.nodes, remaining_estimate(qjob),
                              qjob.submit_time_s};
      if (!sched::quota_admits_start(entry, accounts.at(qjob.user).quota, running_gpus)) continue;
      joiners.push_back(qid);
    }
    if (joiners.empty()) continue;

    sched::Gang gang;
    gang.id = "gang-" + rid;
    gang.partition = rjob.placement;
    gang.members.push_back(rid);
    gang.members.insert(gang.members.end(), joiners.begin(), joiners.end());
    gang.active = rid;
    gang.last_switch_s = rjob.start_time_s;
    emit(ev_gang_changed(next_seq(), now_s_, gang));
  }
}

void Controller::probe_backends() {
  std::vector<std::string> names;
  for (const auto& [b, since] : st_.backend_down_since)
    if (now_s_ - since >= cfg_.probe_interval_s) names.push_back(b);
  for (const auto& b : names) emit(ev_backend_health(next_seq(), now_s_, b, true));
}

// ---- queries ----

json Controller::status(const std::string& job_id) const {
  std::lock_guard lk(mu_);
  auto it = st_.jobs.find(job_id);
  if (it == st_.jobs.end()) fail(Errc::not_found, "unknown job '" + job_id + "'");
  return it->second.to_json();
}

json Controller::list(const json& filter) const {
  std::lock_guard lk(mu_);
  std::string user = filter.value("user", "");
  std::string state = filter.value("state", "");
  if (!state.empty()) job_state_from_name(state);  // reject unknown names up front
  json out = json::array();
  for (const auto& [id, job] : st_.jobs) {
    if (!user.empty() && job.user != user) continue;
    if (!state.empty() && state != job_state_name(job.state)) continue;
    out.push_back({{"job_id", id},
                   {"user", job.user},
                   {"name", job.name},
                   {"state", job_state_name(job.state)},
                   {"qos", schema::qos_name(job.qos)},
                   {"nodes", job.nodes},
                   {"backend", job.backend},
                   {"submit_time_s", job.submit_time_s},
                   {"failure_reason", job.failure_reason}});
  }
  return out;
}

std::vector<exec::FetchedFile> Controller::fetch(const std::string& job_id,
                                                 const std::string& glob) {
  std::lock_guard lk(mu_);
  auto it = st_.jobs.find(job_id);
  if (it == st_.jobs.end()) fail(Errc::not_found, "unknown job '" + job_id + "'");
  const JobRecord& job = it->second;
  if (job.backend.empty()) return {};
  exec::Backend* b = registry_.find(job.backend);
  if (!b) return {};
  try {
    return b->fetch(job_id, glob);
  } catch (const Error& e) {
    if (e.code() == Errc::not_found) return {};  // runner already gone
    throw;
  }
}

bool Controller::job_known(const std::string& job_id) const {
  std::lock_guard lk(mu_);
  return st_.jobs.count(job_id) > 0;
}

bool Controller::job_terminal(const std::string& job_id) const {
  std::lock_guard lk(mu_);
  auto it = st_.jobs.find(job_id);
  return it != st_.jobs.end() && is_terminal(it->second.state);
}

int64_t Controller::now() const {
  std::lock_guard lk(mu_);
  return now_s_;
}

ControllerState Controller::state_copy() const {
  std::lock_guard lk(mu_);
  return st_;
}

}  // namespace tacc::controld
