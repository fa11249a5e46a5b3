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

#include "tacc/state.hpp"

#include <algorithm>
#include <cmath>

#include "tacc/errors.hpp"

namespace fs = std::filesystem;

namespace tacc::controld {

const char* job_state_name(JobState s) {
  switch (s) {
    case JobState::Submitted: return "Submitted";
    case JobState::Compiling: return "Compiling";
    case JobState::Queued: return "Queued";
    case JobState::Provisioning: return "Provisioning";
    case JobState::Running: return "Running";
    case JobState::Suspended: return "Suspended";
    case JobState::Preempted: return "Preempted";
    case JobState::Succeeded: return "Succeeded";
    case JobState::Failed: return "Failed";
    case JobState::Killed: return "Killed";
  }
  return "unknown";
}

JobState job_state_from_name(const std::string& s) {
  for (JobState st : kAllJobStates)
    if (s == job_state_name(st)) return st;
  fail(Errc::schema_invalid, "unknown job state '" + s + "'");
}

bool is_terminal(JobState s) {
  return s == JobState::Succeeded || s == JobState::Failed || s == JobState::Killed;
}

// ---- placement (de)serialization ----

json placement_to_json(const sched::Placement& p) {
  json out = json::object();
  for (const auto& [node, req] : p)
    out[node] = {{"cpus", req.cpus}, {"gpus", req.gpus}, {"mem_mib", req.mem_mib}};
  return out;
}

sched::Placement placement_from_json(const json& doc) {
  sched::Placement p;
  for (const auto& [node, req] : doc.items())
    p[node] = {req.at("cpus").get<int64_t>(), req.at("gpus").get<int64_t>(),
               req.at("mem_mib").get<int64_t>()};
  return p;
}

// ---- JobRecord ----

json JobRecord::to_json() const {
  json ts = json::object();
  for (const auto& [k, v] : timestamps) ts[k] = v;
  json codes = json::object();
  for (const auto& [rank, code] : exit_codes) codes[std::to_string(rank)] = code;
  return {{"job_id", job_id},
          {"user", user},
          {"name", name},
          {"spec_hash", spec_hash.hex()},
          {"bundle_id", bundle_id.hex()},
          {"spec_canonical", spec_canonical},
          {"qos", schema::qos_name(qos)},
          {"per_node",
           {{"cpus", per_node.cpus}, {"gpus", per_node.gpus}, {"mem_mib", per_node.mem_mib}}},
          {"nodes", nodes},
          {"walltime_estimate_s", walltime_estimate_s},
          {"state", job_state_name(state)},
          {"failure_reason", failure_reason},
          {"timestamps", std::move(ts)},
          {"selection_trace", selection_trace},
          {"exit_codes", std::move(codes)},
          {"placement", placement_to_json(placement)},
          {"est_end_s", est_end_s},
          {"backend", backend},
          {"backends_attempted", backends_attempted},
          {"submit_time_s", submit_time_s},
          {"start_time_s", start_time_s},
          {"active_accrued_s", active_accrued_s}};
}

JobRecord JobRecord::from_json(const json& doc) {
  JobRecord j;
  try {
    j.job_id = doc.at("job_id").get<std::string>();
    j.user = doc.at("user").get<std::string>();
    j.name = doc.at("name").get<std::string>();
    j.spec_hash = Digest::from_hex(doc.at("spec_hash").get<std::string>());
    j.bundle_id = Digest::from_hex(doc.at("bundle_id").get<std::string>());
    j.spec_canonical = doc.at("spec_canonical").get<std::string>();
    j.qos = schema::qos_from_name(doc.at("qos").get<std::string>());
    const auto& pn = doc.at("per_node");
    j.per_node = {pn.at("cpus").get<int64_t>(), pn.at("gpus").get<int64_t>(),
                  pn.at("mem_mib").get<int64_t>()};
    j.nodes = doc.at("nodes").get<int64_t>();
    j.walltime_estimate_s = doc.at("walltime_estimate_s").get<int64_t>();
    j.state = job_state_from_name(doc.at("state").get<std::string>());
    j.failure_reason = doc.at("failure_reason").get<std::string>();
    for (const auto& [k, v] : doc.at("timestamps").items()) j.timestamps[k] = v.get<int64_t>();
    j.selection_trace = doc.at("selection_trace");
    for (const auto& [k, v] : doc.at("exit_codes").items())
      j.exit_codes[std::stoll(k)] = v.get<int64_t>();
    j.placement = placement_from_json(doc.at("placement"));
    j.est_end_s = doc.at("est_end_s").get<int64_t>();
    j.backend = doc.at("backend").get<std::string>();
    j.backends_attempted = doc.at("backends_attempted").get<std::vector<std::string>>();
    j.submit_time_s = doc.at("submit_time_s").get<int64_t>();
    j.start_time_s = doc.at("start_time_s").get<int64_t>();
    j.active_accrued_s = doc.at("active_accrued_s").get<int64_t>();
  } catch (const json::exception& ex) {
    fail(Errc::schema_invalid, std::string("malformed job record: ") + ex.what());
  }
  return j;
}

// ---- ControllerState ----

namespace {

json gang_to_json(const sched::Gang& g) {
  return {{"id", g.id},
          {"partition", placement_to_json(g.partition)},
          {"members", g.members},
          {"active", g.active},
          {"last_switch_s", g.last_switch_s}};
}

sched::Gang gang_from_json(const json& doc) {
  sched::Gang g;
  g.id = doc.at("id").get<std::string>();
  g.partition = placement_from_json(doc.at("partition"));
  g.members = doc.at("members").get<std::vector<std::string>>();
  g.active = doc.at("active").get<std::string>();
  g.last_switch_s = doc.at("last_switch_s").get<int64_t>();
  return g;
}

}  // namespace

json ControllerState::to_json() const {
  json jjobs = json::object();
  for (const auto& [id, job] : jobs) jjobs[id] = job.to_json();
  json jusage = json::object();
  for (const auto& [user, u] : usage) jusage[user] = u;
  json jgangs = json::object();
  for (const auto& [id, g] : gangs) jgangs[id] = gang_to_json(g);
  json jdown = json::object();
  for (const auto& [b, t] : backend_down_since) jdown[b] = t;
  return {{"jobs", std::move(jjobs)},       {"usage", std::move(jusage)},
          {"next_job_num", next_job_num},   {"last_seq", last_seq},
          {"last_decay_t", last_decay_t},   {"gangs", std::move(jgangs)},
          {"backend_down_since", std::move(jdown)}};
}

ControllerState ControllerState::from_json(const json& doc) {
  ControllerState s;
  try {
    for (const auto& [id, j] : doc.at("jobs").items()) s.jobs[id] = JobRecord::from_json(j);
    for (const auto& [user, u] : doc.at("usage").items()) s.usage[user] = u.get<double>();
    s.next_job_num = doc.at("next_job_num").get<uint64_t>();
    s.last_seq = doc.at("last_seq").get<uint64_t>();
    s.last_decay_t = doc.at("last_decay_t").get<int64_t>();
    for (const auto& [id, g] : doc.at("gangs").items()) s.gangs[id] = gang_from_json(g);
    for (const auto& [b, t] : doc.at("backend_down_since").items())
      s.backend_down_since[b] = t.get<int64_t>();
  } catch (const json::exception& ex) {
    fail(Errc::schema_invalid, std::string("malformed state snapshot: ") + ex.what());
  }
  return s;
}

// ---- apply_event ----

namespace {

[[noreturn]] void conflict(const Event& e, const std::string& why) {
  fail(Errc::state_conflict,
       "event " + std::string(event_kind_name(e.kind)) + " (seq " + std::to_string(e.seq) +
           ", job '" + e.job_id + "'): " + why);
}

bool is_system_kind(EventKind k) {
  return k == EventKind::decision_applied || k == EventKind::gang_changed ||
         k == EventKind::backend_health || k == EventKind::usage_decayed;
}

// Source states from which each job-scoped event is legal.
std::vector<JobState> legal_sources(EventKind k) {
  switch (k) {
    case EventKind::compile_started: return {JobState::Submitted};
    case EventKind::compiled: return {JobState::Compiling};
    case EventKind::enqueued: return {JobState::Provisioning, JobState::Preempted};
    case EventKind::provision_started: return {JobState::Queued, JobState::Provisioning};
    case EventKind::provisioned: return {JobState::Provisioning};
    case EventKind::provision_failed: return {JobState::Provisioning};
    case EventKind::rank_started: return {JobState::Running};
    case EventKind::rank_exited: return {JobState::Running};
    case EventKind::suspended: return {JobState::Running};
    case EventKind::resumed: return {JobState::Suspended};
    case EventKind::preempted: return {JobState::Running, JobState::Suspended};
    case EventKind::killed: return {JobState::Queued, JobState::Running, JobState::Suspended};
    default: return {};
  }
}

void enter(JobRecord& job, JobState next, int64_t t) {
  job.state = next;
  job.timestamps[job_state_name(next)] = t;
}

void release_resources(JobRecord& job) {
  job.placement.clear();
  job.est_end_s = 0;
}

int64_t job_num(const std::string& job_id) {
  try {
    return std::stoll(job_id);
  } catch (...) {
    return 0;
  }
}

}  // namespace

void apply_event(ControllerState& state, const Event& e) {
  if (e.seq != state.last_seq + 1)
    fail(Errc::sequence_gap, "event seq " + std::to_string(e.seq) + " after " +
                                 std::to_string(state.last_seq));

  // -------- system-scoped events --------
  if (is_system_kind(e.kind)) {
    if (!e.job_id.empty()) conflict(e, "system event must not carry a job id");
    switch (e.kind) {
      case EventKind::decision_applied:
        break;  // audit record only
      case EventKind::gang_changed: {
        std::string gid = e.payload.at("gang_id").get<std::string>();
        if (e.payload.value("deleted", false)) {
          state.gangs.erase(gid);
        } else {
          sched::Gang g;
          g.id = gid;
          g.partition = placement_from_json(e.payload.at("partition"));
          g.members = e.payload.at("members").get<std::vector<std::string>>();
          g.active = e.payload.at("active").get<std::string>();
          g.last_switch_s = e.payload.at("last_switch_s").get<int64_t>();
          state.gangs[gid] = std::move(g);
        }
        break;
      }
      case EventKind::backend_health: {
        std::string b = e.payload.at("backend").get<std::string>();
        if (e.payload.at("up").get<bool>())
          state.backend_down_since.erase(b);
        else
          state.backend_down_since[b] = e.t;
        break;
      }
      case EventKind::usage_decayed: {
        double factor = e.payload.at("factor").get<double>();
        for (auto& [_, u] : state.usage) u *= factor;
        state.last_decay_t = e.t;
        break;
      }
      default: break;
    }
    state.last_seq = e.seq;
    return;
  }

  // -------- job-scoped events --------
  if (e.job_id.empty()) conflict(e, "job event requires a job id");

  if (e.kind == EventKind::submitted) {
    if (state.jobs.count(e.job_id)) conflict(e, "job already exists");
    JobRecord job;
    const json& p = e.payload;
    try {
      job.job_id = e.job_id;
      job.user = p.at("user").get<std::string>();
      job.name = p.at("name").get<std::string>();
      job.spec_hash = Digest::from_hex(p.at("spec_hash").get<std::string>());
      job.bundle_id = Digest::from_hex(p.at("bundle_id").get<std::string>());
      job.spec_canonical = p.at("spec_canonical").get<std::string>();
      job.qos = schema::qos_from_name(p.at("qos").get<std::string>());
      const auto& pn = p.at("per_node");
      job.per_node = {pn.at("cpus").get<int64_t>(), pn.at("gpus").get<int64_t>(),
                      pn.at("mem_mib").get<int64_t>()};
      job.nodes = p.at("nodes").get<int64_t>();
      job.walltime_estimate_s = p.at("walltime_estimate_s").get<int64_t>();
    } catch (const json::exception& ex) {
      fail(Errc::schema_invalid, std::string("malformed submitted payload: ") + ex.what());
    }
    job.submit_time_s = e.t;
    enter(job, JobState::Submitted, e.t);
    state.jobs.emplace(e.job_id, std::move(job));
    state.next_job_num = std::max<uint64_t>(state.next_job_num,
                                            static_cast<uint64_t>(job_num(e.job_id)) + 1);
    state.last_seq = e.seq;
    return;
  }

  auto it = state.jobs.find(e.job_id);
  if (it == state.jobs.end()) conflict(e, "unknown job");
  JobRecord& job = it->second;

  auto sources = legal_sources(e.kind);
  if (std::find(sources.begin(), sources.end(), job.state) == sources.end())
    conflict(e, std::string("illegal in state ") + job_state_name(job.state));

  // Parse payload fields up front so a malformed payload cannot leave a
  // half-applied mutation behind.
  const json& p = e.payload;
  try {
    switch (e.kind) {
      case EventKind::compile_started:
        enter(job, JobState::Compiling, e.t);
        break;

      case EventKind::compiled: {
        if (p.at("ok").get<bool>()) {
          job.selection_trace = p.value("selection_trace", json());
          enter(job, JobState::Queued, e.t);
        } else {
          job.failure_reason = p.at("error").at("code").get<std::string>() + ": " +
                               p.at("error").at("message").get<std::string>();
          enter(job, JobState::Failed, e.t);
        }
        break;
      }

      case EventKind::enqueued:
        release_resources(job);
        job.backend.clear();
        job.backends_attempted.clear();
        enter(job, JobState::Queued, e.t);
        break;

      case EventKind::provision_started: {
        auto placement = placement_from_json(p.at("placement"));
        std::string backend = p.at("backend").get<std::string>();
        job.placement = std::move(placement);
        job.est_end_s = p.at("est_end_s").get<int64_t>();
        job.backend = backend;
        job.backends_attempted.push_back(backend);
        enter(job, JobState::Provisioning, e.t);
        break;
      }

      case EventKind::provisioned:
        job.start_time_s = e.t;
        job.exit_codes.clear();
        enter(job, JobState::Running, e.t);
        break;

      case EventKind::provision_failed: {
        bool fatal = p.at("fatal").get<bool>();
        std::string cause = p.at("cause").get<std::string>();
        release_resources(job);
        job.backend.clear();
        if (fatal) {
          job.failure_reason = "BACKEND_UNAVAILABLE: " + cause;
          enter(job, JobState::Failed, e.t);
        }
        // non-fatal: stays Provisioning awaiting the next backend
        break;
      }

      case EventKind::rank_started:
        break;  // informational

      case EventKind::rank_exited: {
        int64_t rank = p.at("rank").get<int64_t>();
        int64_t code = p.at("code").get<int64_t>();
        job.active_accrued_s += p.at("active_s").get<int64_t>();
        state.usage[job.user] += p.at("usage_charge").get<double>();
        job.exit_codes[rank] = code;
        if (static_cast<int64_t>(job.exit_codes.size()) >= job.nodes) {
          bool all_zero = std::all_of(job.exit_codes.begin(), job.exit_codes.end(),
                                      [](const auto& kv) { return kv.second == 0; });
          release_resources(job);
          // backend stays: terminal records keep their provenance so
          // fetch/status still know where the working dirs live
          if (all_zero) {
            enter(job, JobState::Succeeded, e.t);
          } else {
            for (const auto& [r, c] : job.exit_codes)
              if (c != 0) {
                job.failure_reason = "rank " + std::to_string(r) + " exited " + std::to_string(c);
                break;
              }
            enter(job, JobState::Failed, e.t);
          }
        }
        break;
      }

      case EventKind::suspended:
        job.active_accrued_s += p.at("active_s").get<int64_t>();
        state.usage[job.user] += p.at("usage_charge").get<double>();
        release_resources(job);
        enter(job, JobState::Suspended, e.t);
        break;

      case EventKind::resumed:
        job.placement = placement_from_json(p.at("placement"));
        job.est_end_s = p.at("est_end_s").get<int64_t>();
        job.start_time_s = e.t;
        enter(job, JobState::Running, e.t);
        break;

      case EventKind::preempted:
        job.active_accrued_s += p.at("active_s").get<int64_t>();
        state.usage[job.user] += p.at("usage_charge").get<double>();
        release_resources(job);
        job.backend.clear();
        enter(job, JobState::Preempted, e.t);
        break;

      case EventKind::killed: {
        std::string cause = p.at("cause").get<std::string>();
        job.active_accrued_s += p.at("active_s").get<int64_t>();
        state.usage[job.user] += p.at("usage_charge").get<double>();
        release_resources(job);
        if (cause != "user_request") job.failure_reason = cause;
        enter(job, JobState::Killed, e.t);
        break;
      }

      default:
        conflict(e, "unhandled kind");
    }
  } catch (const json::exception& ex) {
    fail(Errc::schema_invalid, std::string("malformed payload: ") + ex.what());
  }

  state.last_seq = e.seq;
}

// ---- event builders ----

namespace {
Event mk(uint64_t seq, int64_t t, std::string job_id, EventKind kind, json payload) {
  Event e;
  e.seq = seq;
  e.t = t;
  e.job_id = std::move(job_id);
  e.kind = kind;
  e.payload = std::move(payload);
  return e;
}
}  // namespace

Event ev_submitted(uint64_t seq, int64_t t, const JobRecord& job) {
  return mk(seq, t, job.job_id, EventKind::submitted,
            {{"user", job.user},
             {"name", job.name},
             {"spec_hash", job.spec_hash.hex()},
             {"bundle_id", job.bundle_id.hex()},
             {"spec_canonical", job.spec_canonical},
             {"qos", schema::qos_name(job.qos)},
             {"per_node",
              {{"cpus", job.per_node.cpus},
               {"gpus", job.per_node.gpus},
               {"mem_mib", job.per_node.mem_mib}}},
             {"nodes", job.nodes},
             {"walltime_estimate_s", job.walltime_estimate_s}});
}

Event ev_compile_started(uint64_t seq, int64_t t, const std::string& job_id) {
  return mk(seq, t, job_id, EventKind::compile_started, json::object());
}

Event ev_compiled_ok(uint64_t seq, int64_t t, const std::string& job_id, json selection_trace) {
  return mk(seq, t, job_id, EventKind::compiled,
            {{"ok", true}, {"selection_trace", std::move(selection_trace)}});
}

Event ev_compiled_failed(uint64_t seq, int64_t t, const std::string& job_id,
                         const std::string& code, const std::string& message) {
  return mk(seq, t, job_id, EventKind::compiled,
            {{"ok", false}, {"error", {{"code", code}, {"message", message}}}});
}

Event ev_enqueued(uint64_t seq, int64_t t, const std::string& job_id) {
  return mk(seq, t, job_id, EventKind::enqueued, json::object());
}

Event ev_decision_applied(uint64_t seq, int64_t t, json decision) {
  return mk(seq, t, "", EventKind::decision_applied, {{"decision", std::move(decision)}});
}

Event ev_provision_started(uint64_t seq, int64_t t, const std::string& job_id,
                           const std::string& backend, const sched::Placement& placement,
                           int64_t est_end_s) {
  return mk(seq, t, job_id, EventKind::provision_started,
            {{"backend", backend},
             {"placement", placement_to_json(placement)},
             {"est_end_s", est_end_s}});
}

Event ev_provisioned(uint64_t seq, int64_t t, const std::string& job_id,
                     const std::vector<std::string>& runner_ids) {
  return mk(seq, t, job_id, EventKind::provisioned, {{"runner_ids", runner_ids}});
}

Event ev_provision_failed(uint64_t seq, int64_t t, const std::string& job_id,
                          const std::string& cause, bool fatal) {
  return mk(seq, t, job_id, EventKind::provision_failed, {{"cause", cause}, {"fatal", fatal}});
}

Event ev_rank_started(uint64_t seq, int64_t t, const std::string& job_id, int64_t rank) {
  return mk(seq, t, job_id, EventKind::rank_started, {{"rank", rank}});
}

Event ev_rank_exited(uint64_t seq, int64_t t, const std::string& job_id, int64_t rank,
                     int64_t code, int64_t active_s, double usage_charge) {
  return mk(seq, t, job_id, EventKind::rank_exited,
            {{"rank", rank}, {"code", code}, {"active_s", active_s}, {"usage_charge", usage_charge}});
}

Event ev_suspended(uint64_t seq, int64_t t, const std::string& job_id, int64_t active_s,
                   double usage_charge) {
  return mk(seq, t, job_id, EventKind::suspended,
            {{"active_s", active_s}, {"usage_charge", usage_charge}});
}

Event ev_resumed(uint64_t seq, int64_t t, const std::string& job_id,
                 const sched::Placement& placement, int64_t est_end_s) {
  return mk(seq, t, job_id, EventKind::resumed,
            {{"placement", placement_to_json(placement)}, {"est_end_s", est_end_s}});
}

Event ev_preempted(uint64_t seq, int64_t t, const std::string& job_id, int64_t active_s,
                   double usage_charge) {
  return mk(seq, t, job_id, EventKind::preempted,
            {{"active_s", active_s}, {"usage_charge", usage_charge}});
}

Event ev_killed(uint64_t seq, int64_t t, const std::string& job_id, const std::string& cause,
                int64_t active_s, double usage_charge) {
  return mk(seq, t, job_id, EventKind::killed,
            {{"cause", cause}, {"active_s", active_s}, {"usage_charge", usage_charge}});
}

Event ev_gang_changed(uint64_t seq, int64_t t, const sched::Gang& gang) {
  return mk(seq, t, "", EventKind::gang_changed,
            {{"gang_id", gang.id},
             {"partition", placement_to_json(gang.partition)},
             {"members", gang.members},
             {"active", gang.active},
             {"last_switch_s", gang.last_switch_s}});
}

Event ev_gang_deleted(uint64_t seq, int64_t t, const std::string& gang_id) {
  return mk(seq, t, "", EventKind::gang_changed, {{"gang_id", gang_id}, {"deleted", true}});
}

Event ev_backend_health(uint64_t seq, int64_t t, const std::string& backend, bool up) {
  return mk(seq, t, "", EventKind::backend_health, {{"backend", backend}, {"up", up}});
}

Event ev_usage_decayed(uint64_t seq, int64_t t, double dt_s, double half_life_s) {
  // the factor is computed once here so live and replayed arithmetic are
  // bit-identical
  double factor = std::exp2(-dt_s / half_life_s);
  return mk(seq, t, "", EventKind::usage_decayed,
            {{"dt_s", dt_s}, {"half_life_s", half_life_s}, {"factor", factor}});
}

// ---- persistence ----

RecoveryResult recover(const fs::path& state_dir) {
  RecoveryResult res;
  fs::path snap = state_dir / "snapshot.json";
  if (fs::exists(snap)) {
    json doc = json::parse(read_file(snap), nullptr, false);
    if (!doc.is_discarded()) res.state = ControllerState::from_json(doc);
  }

  auto log = read_log(state_dir / "events.log");
  res.corrupt_at_seq = log.corrupt_at_seq;
  for (const auto& e : log.events) {
    if (e.seq <= res.state.last_seq) continue;  // covered by the snapshot
    try {
      apply_event(res.state, e);
    } catch (const Error&) {
      // a gap or undecodable transition: keep the valid prefix
      res.corrupt_at_seq = e.seq;
      break;
    }
  }
  return res;
}

void write_snapshot(const fs::path& state_dir, const ControllerState& state) {
  std::error_code ec;
  fs::create_directories(state_dir, ec);
  write_file_atomic(state_dir / "snapshot.json", canonical_text(state.to_json()));
}

}  // namespace tacc::controld
