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
// tcloud — the task cloud client.
//
//   tcloud submit TASK_FILE [--workspace DIR]
//   tcloud status [JOB_ID] [--state S] [--user U]
//   tcloud logs JOB_ID [--follow] [--since SEQ]
//   tcloud get JOB_ID [GLOB] [--dest DIR]
//   tcloud kill JOB_ID
//   tcloud cluster list | use NAME | add NAME ENDPOINT
//
// Exit codes: 0 success, 2 local/usage error, 3 connectivity or cluster
// config error, 4 server-reported error (code printed).

#include <signal.h>

#include <cinttypes>
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "tacc/archive.hpp"
#include "tacc/cas.hpp"
#include "tacc/client.hpp"
#include "tacc/schema.hpp"

namespace fs = std::filesystem;
using tacc::Errc;
using tacc::Error;
using tacc::json;
namespace tcloud = tacc::tcloud;

namespace {

std::string g_cluster;  // --cluster override, shared by all remote commands
bool g_json = false;

std::string resolve_endpoint() {
  tcloud::ClientConfig cfg = tcloud::load_config(tcloud::default_config_path());
  std::string name = g_cluster.empty() ? cfg.current : g_cluster;
  if (name.empty())
    tacc::fail(Errc::io_error,
               "config error: no cluster selected (try 'tcloud cluster add' then "
               "'tcloud cluster use')");
  const tcloud::ClusterEntry* e = cfg.find(name);
  if (!e) tacc::fail(Errc::io_error, "config error: unknown cluster '" + name + "'");
  return e->endpoint;
}

std::string age_str(int64_t s) {
  if (s < 0) s = 0;
  char buf[32];
  if (s < 120)
    snprintf(buf, sizeof buf, "%" PRId64 "s", s);
  else if (s < 7200)
    snprintf(buf, sizeof buf, "%" PRId64 "m", s / 60);
  else if (s < 172800)
    snprintf(buf, sizeof buf, "%" PRId64 "h", s / 3600);
  else
    snprintf(buf, sizeof buf, "%" PRId64 "d", s / 86400);
  return buf;
}

void print_status_header() {
  printf("%-10s %-10s %-12s %-6s %-5s %s\n", "JOB", "USER", "STATE", "AGE", "NODES",
         "BACKEND");
}

void print_status_row(const json& j, int64_t now) {
  std::string backend = j.value("backend", "");
  printf("%-10s %-10s %-12s %-6s %-5" PRId64 " %s\n",
         j.at("job_id").get<std::string>().c_str(), j.at("user").get<std::string>().c_str(),
         j.at("state").get<std::string>().c_str(),
         age_str(now - j.at("submit_time_s").get<int64_t>()).c_str(),
         j.at("nodes").get<int64_t>(), backend.empty() ? "-" : backend.c_str());
}

int cmd_submit(const std::string& task_file, const std::string& workspace) {
  json doc = json::parse(tacc::read_file(task_file), nullptr, false);
  if (doc.is_discarded()) tacc::fail(Errc::schema_invalid, task_file + " is not valid JSON");
  tacc::schema::parse(doc);  // local gate: reject bad specs before any connection

  std::string endpoint = resolve_endpoint();
  fs::path ws = workspace.empty() ? fs::absolute(task_file).parent_path() : fs::path(workspace);
  tacc::bundle::Cas cache(tcloud::cache_cas_root());

  tcloud::ClientSession session(endpoint);
  tcloud::ClientSession::SubmitStats stats;
  std::string job_id = session.submit(doc, ws, cache, &stats);
  if (g_json) {
    json out = {{"job_id", job_id},
                {"objects_uploaded", stats.objects_uploaded},
                {"manifest_uploaded", stats.manifest_uploaded}};
    std::cout << out.dump() << "\n";
  } else {
    std::cerr << "uploaded " << stats.objects_uploaded << " object(s)"
              << (stats.manifest_uploaded ? " + manifest" : "") << "\n";
    std::cout << job_id << "\n";
  }
  return 0;
}

int cmd_status(const std::string& job_id, const std::string& state,
               const std::string& user) {
  tcloud::ClientSession session(resolve_endpoint());
  if (!job_id.empty()) {
    json reply = session.status(job_id);
    if (g_json) {
      std::cout << reply.dump() << "\n";
      return 0;
    }
    const json& j = reply.at("job");
    print_status_header();
    print_status_row(j, reply.at("now").get<int64_t>());
    const json& codes = j.at("exit_codes");
    if (!codes.empty()) {
      std::cout << "exit codes:";
      for (const auto& [rank, code] : codes.items())
        std::cout << " rank" << rank << "=" << code.get<int64_t>();
      std::cout << "\n";
    }
    std::string reason = j.value("failure_reason", "");
    if (!reason.empty()) std::cout << "reason: " << reason << "\n";
    return 0;
  }

  json filter = json::object();
  if (!state.empty()) filter["state"] = state;
  if (!user.empty()) filter["user"] = user;
  json reply = session.list(filter);
  if (g_json) {
    std::cout << reply.dump() << "\n";
    return 0;
  }
  print_status_header();
  int64_t now = reply.at("now").get<int64_t>();
  for (const auto& j : reply.at("jobs")) print_status_row(j, now);
  return 0;
}

int cmd_logs(const std::string& job_id, bool follow, uint64_t since) {
  bool retried = false;
  for (;;) {
    try {
      tcloud::ClientSession session(resolve_endpoint());
      session.stream_logs(job_id, follow, since, [&](const tcloud::LogLine& ln) {
        since = ln.seq;  // survives a reconnect, so the retry never re-prints
        std::cout << "[" << ln.rank << "] " << ln.line << "\n";
        if (follow) std::cout.flush();
      });
      return 0;
    } catch (const tcloud::ServerError&) {
      throw;
    } catch (const Error& e) {
      if (e.code() == Errc::io_error && follow && !retried) {
        retried = true;
        continue;
      }
      throw;
    }
  }
}

int cmd_get(const std::string& job_id, const std::string& glob, const std::string& dest) {
  tcloud::ClientSession session(resolve_endpoint());
  tacc::archive::Archive a = session.fetch(job_id, glob);
  if (g_json) {
    std::cout << a.entries.dump() << "\n";
  }
  size_t n = tacc::archive::extract(a.entries, a.blob, dest);
  if (!g_json) {
    if (n == 0)
      std::cout << "no files matched '" << glob << "'\n";
    else
      std::cout << "retrieved " << n << " file(s) to " << dest << "\n";
  }
  return 0;
}

int cmd_kill(const std::string& job_id) {
  tcloud::ClientSession session(resolve_endpoint());
  json reply = session.kill(job_id);
  if (g_json)
    std::cout << reply.dump() << "\n";
  else
    std::cout << reply.at("job_id").get<std::string>() << " "
              << reply.at("state").get<std::string>() << "\n";
  return 0;
}

int cmd_cluster_list() {
  tcloud::ClientConfig cfg = tcloud::load_config(tcloud::default_config_path());
  for (const auto& e : cfg.clusters)
    printf("%s %-12s %s\n", e.name == cfg.current ? "*" : " ", e.name.c_str(),
           e.endpoint.c_str());
  return 0;
}

int cmd_cluster_use(const std::string& name) {
  fs::path path = tcloud::default_config_path();
  tcloud::ClientConfig cfg = tcloud::load_config(path);
  if (!cfg.find(name))
    tacc::fail(Errc::schema_invalid, "unknown cluster '" + name + "'");
  cfg.current = name;
  tcloud::save_config(path, cfg);
  std::cout << "current cluster: " << name << "\n";
  return 0;
}

int cmd_cluster_add(const std::string& name, const std::string& endpoint) {
  fs::path path = tcloud::default_config_path();
  tcloud::ClientConfig cfg = tcloud::load_config(path);
  if (cfg.find(name)) tacc::fail(Errc::schema_invalid, "cluster '" + name + "' already exists");
  cfg.clusters.push_back({name, endpoint});
  if (cfg.current.empty()) cfg.current = name;  // first entry becomes the default
  tcloud::save_config(path, cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  signal(SIGPIPE, SIG_IGN);

  CLI::App app{"tcloud — task cloud client"};
  app.require_subcommand(1);

  std::string task_file, workspace, job_id, state, user, glob = "*", dest = ".",
                                                         cl_name, cl_endpoint;
  bool follow = false;
  uint64_t since = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--cluster", g_cluster, "target cluster (defaults to current)");
    cmd->add_flag("--json", g_json, "emit raw protocol payloads");
  };

  auto* submit = app.add_subcommand("submit", "submit a task");
  submit->add_option("task_file", task_file, "task spec JSON")->required();
  submit->add_option("--workspace", workspace, "bundle root (defaults to the task file's dir)");
  add_common(submit);

  auto* status = app.add_subcommand("status", "show job state");
  status->add_option("job_id", job_id, "job id (omit to list all)");
  status->add_option("--state", state, "filter by state name");
  status->add_option("--user", user, "filter by user");
  add_common(status);

  auto* logs = app.add_subcommand("logs", "stream job logs");
  logs->add_option("job_id", job_id, "job id")->required();
  logs->add_flag("--follow", follow, "stream until the job is terminal");
  logs->add_option("--since", since, "resume after this sequence number");
  add_common(logs);

  auto* get = app.add_subcommand("get", "fetch output files");
  get->add_option("job_id", job_id, "job id")->required();
  get->add_option("glob", glob, "path pattern (default *)");
  get->add_option("--dest", dest, "destination directory");
  add_common(get);

  auto* kill = app.add_subcommand("kill", "stop a job");
  kill->add_option("job_id", job_id, "job id")->required();
  add_common(kill);

  auto* cluster = app.add_subcommand("cluster", "manage cluster config");
  cluster->require_subcommand(1);
  auto* cl_list = cluster->add_subcommand("list", "show configured clusters");
  auto* cl_use = cluster->add_subcommand("use", "switch the current cluster");
  cl_use->add_option("name", cl_name, "cluster name")->required();
  auto* cl_add = cluster->add_subcommand("add", "register a cluster");
  cl_add->add_option("name", cl_name, "cluster name")->required();
  cl_add->add_option("endpoint", cl_endpoint, "host:port or exec:COMMAND")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(submit)) return cmd_submit(task_file, workspace);
    if (app.got_subcommand(status)) return cmd_status(job_id, state, user);
    if (app.got_subcommand(logs)) return cmd_logs(job_id, follow, since);
    if (app.got_subcommand(get)) return cmd_get(job_id, glob, dest);
    if (app.got_subcommand(kill)) return cmd_kill(job_id);
    if (cluster->got_subcommand(cl_list)) return cmd_cluster_list();
    if (cluster->got_subcommand(cl_use)) return cmd_cluster_use(cl_name);
    if (cluster->got_subcommand(cl_add)) return cmd_cluster_add(cl_name, cl_endpoint);
    return 2;
  } catch (const tcloud::ServerError& e) {
    std::cerr << tacc::errc_name(e.code()) << ": " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    if (e.code() == Errc::io_error) {
      std::cerr << "tcloud: " << e.what() << "\n";
      return 3;
    }
    std::cerr << "tcloud: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "tcloud: " << e.what() << "\n";
    return 2;
  }
}
