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

#include <doctest.h>

#include <chrono>
#include <thread>

#include "tacc/bundle.hpp"
#include "tacc/errors.hpp"
#include "tacc/exec.hpp"
#include "tacc/exec_local.hpp"
#include "tacc/exec_sim.hpp"
#include "testutil.hpp"

using namespace tacc;
using namespace tacc::exec;
using tacc::test::TempDir;

namespace {

schema::TaskSpec base_spec() {
  schema::TaskSpec spec;
  spec.name = "train";
  spec.user = "ada";
  spec.resources = {4, 1, 4096};
  spec.entrypoint = "python train.py";
  return spec;
}

sched::ResourceReq big_node() { return {64, 8, 262144}; }

std::shared_ptr<SimBackend> sim(const std::string& name, const bundle::Cas* cas = nullptr) {
  return std::make_shared<SimBackend>(name, big_node(), cas);
}

// Builds a one-file workspace (plus optional sim_script.json) and returns
// the manifest.
bundle::BundleManifest make_bundle(const schema::TaskSpec& spec, bundle::Cas& cas,
                                   const TempDir& ws, const json& script = nullptr) {
  tacc::write_file(ws.path() / "train.py", "print('hi')\n");
  if (!script.is_null())
    tacc::write_file(ws.path() / "sim_script.json", script.dump());
  return bundle::build_bundle(spec, ws.path(), cas);
}

ProvisionRequest make_req(const std::string& job_id, const bundle::BundleManifest& manifest,
                          const schema::TaskSpec& spec, int64_t nranks, int64_t now_s) {
  ProvisionRequest req;
  req.job_id = job_id;
  req.manifest = manifest;
  for (int64_t i = 0; i < nranks; ++i)
    req.placement["n" + std::to_string(i)] = spec.resources;
  req.env = spec.env;
  req.entrypoint = spec.entrypoint;
  req.now_s = now_s;
  return req;
}

}  // namespace

TEST_CASE("selection records one factor per layer, in layer order") {
  Registry reg;
  reg.add(sim("sim0"));
  reg.add(sim("sim1"));

  auto trace = select_backend(base_spec(), {}, 3600, reg, {}, {});
  REQUIRE(trace.factors.size() == 4);
  CHECK(trace.factors[0].layer == "schema");
  CHECK(trace.factors[1].layer == "compiler");
  CHECK(trace.factors[2].layer == "scheduling");
  CHECK(trace.factors[3].layer == "execution");
  // no preference, no rules: pure registry-order fallback
  CHECK(trace.backends == std::vector<std::string>{"sim0", "sim1"});
}

TEST_CASE("user preference pins the head of the ranking") {
  Registry reg;
  reg.add(sim("a"));
  reg.add(sim("b"));
  reg.add(sim("c"));

  auto spec = base_spec();
  spec.runtime_preference = {"b", "a"};
  auto trace = select_backend(spec, {}, 3600, reg, {}, {});
  CHECK(trace.backends == std::vector<std::string>{"b", "a", "c"});
  CHECK(trace.factors[0].effect == "ranked b,a first");
}

TEST_CASE("static and runtime rules fill the middle layers") {
  Registry reg;
  reg.add(sim("general"));
  reg.add(sim("py-farm"));
  reg.add(sim("quick"));

  SelectionRules rules;
  rules.static_rules.push_back({0, "python", "py-farm"});
  rules.runtime_rules.push_back({600, "quick"});

  bundle::StaticCharacteristics chars;
  chars.language_guess = "python";

  SUBCASE("both rules fire") {
    auto trace = select_backend(base_spec(), chars, 120, reg, {}, rules);
    CHECK(trace.backends == std::vector<std::string>{"py-farm", "quick", "general"});
    CHECK(trace.factors[1].effect == "ranked py-farm next");
    CHECK(trace.factors[2].effect == "ranked quick next");
  }
  SUBCASE("long job ignores the duration rule") {
    auto trace = select_backend(base_spec(), chars, 7200, reg, {}, rules);
    CHECK(trace.backends == std::vector<std::string>{"py-farm", "general", "quick"});
    CHECK(trace.factors[2].effect == "no rule applied");
  }
  SUBCASE("an earlier layer pins the position") {
    auto spec = base_spec();
    spec.runtime_preference = {"quick"};
    auto trace = select_backend(spec, chars, 120, reg, {}, rules);
    CHECK(trace.backends == std::vector<std::string>{"quick", "py-farm", "general"});
  }
  SUBCASE("bundle size rule") {
    SelectionRules sz;
    sz.static_rules.push_back({1 << 20, "", "general"});
    bundle::StaticCharacteristics small{"python", 100};
    bundle::StaticCharacteristics large{"python", (1 << 20) + 1};
    CHECK(select_backend(base_spec(), small, 0, reg, {}, sz).backends[0] == "general");
    // 100 bytes does not exceed 1 MiB; the rule must not fire
    auto t = select_backend(base_spec(), small, 0, reg, {}, sz);
    CHECK(t.factors[1].effect == "no rule applied");
    CHECK(select_backend(base_spec(), large, 0, reg, {}, sz).backends[0] == "general");
  }
}

TEST_CASE("incapable and unhealthy backends never appear") {
  Registry reg;
  reg.add(std::make_shared<SimBackend>("tiny", sched::ResourceReq{1, 0, 512}, nullptr));
  reg.add(sim("roomy"));
  reg.add(sim("sick"));

  auto spec = base_spec();  // wants 4 cpus / 1 gpu: "tiny" cannot host it
  spec.runtime_preference = {"tiny", "sick"};

  auto trace = select_backend(spec, {}, 3600, reg, {"sick"}, {});
  CHECK(trace.backends == std::vector<std::string>{"roomy"});

  CHECK_THROWS_WITH_AS(select_backend(spec, {}, 3600, reg, {"roomy", "sick"}, {}),
                       "no healthy backend satisfies the resource request", Error);
  try {
    select_backend(spec, {}, 3600, reg, {"roomy", "sick"}, {});
  } catch (const Error& e) {
    CHECK(e.code() == Errc::backend_unavailable);
  }
}

TEST_CASE("failover walks the trace past attempted and down backends") {
  SelectionTrace trace;
  trace.backends = {"a", "b", "c"};
  CHECK(failover_next(trace, {}, {}) == "a");
  CHECK(failover_next(trace, {"a"}, {}) == "b");
  CHECK(failover_next(trace, {"a"}, {"b"}) == "c");
  CHECK(failover_next(trace, {"a", "c"}, {"b"}) == std::nullopt);
}

TEST_CASE("selection trace survives a JSON round trip") {
  Registry reg;
  reg.add(sim("sim0"));
  auto spec = base_spec();
  spec.runtime_preference = {"sim0"};
  auto trace = select_backend(spec, {}, 60, reg, {}, {});
  auto back = SelectionTrace::from_json(trace.to_json());
  CHECK(back.backends == trace.backends);
  REQUIRE(back.factors.size() == trace.factors.size());
  for (size_t i = 0; i < back.factors.size(); ++i) {
    CHECK(back.factors[i].layer == trace.factors[i].layer);
    CHECK(back.factors[i].factor == trace.factors[i].factor);
    CHECK(back.factors[i].effect == trace.factors[i].effect);
  }
}

TEST_CASE("rank env carries the placement contract") {
  ProvisionRequest req;
  req.job_id = "00000042";
  req.placement = {{"nodeA", {2, 1, 1024}}, {"nodeB", {2, 1, 1024}}, {"nodeC", {2, 1, 1024}}};
  req.env = {{"FOO", "bar"}, {"TACC_NNODES", "999"}};  // user value loses
  auto env = rank_env(req, 1);
  CHECK(env.at("TACC_JOB_ID") == "00000042");
  CHECK(env.at("TACC_NODE_RANK") == "1");
  CHECK(env.at("TACC_NNODES") == "3");
  CHECK(env.at("TACC_NODELIST") == "nodeA,nodeB,nodeC");
  CHECK(env.at("FOO") == "bar");
}

// ---- simulated backend ----

TEST_CASE("sim: scripted events play back in virtual-time order") {
  TempDir store, ws;
  bundle::Cas cas(store.path());
  json script = {{"events",
                  {{{"rank", 0}, {"t", 2}, {"kind", "log"}, {"stream", "stdout"}, {"text", "r0"}},
                   {{"rank", 1}, {"t", 1}, {"kind", "log"}, {"text", "r1"}},
                   {{"rank", 0}, {"t", 5}, {"kind", "exit"}, {"code", 0}},
                   {{"rank", 1}, {"t", 4}, {"kind", "exit"}, {"code", 3}}}}};
  auto spec = base_spec();
  auto manifest = make_bundle(spec, cas, ws, script);

  SimBackend be("sim0", big_node(), &cas);
  auto runners = be.provision(make_req("00000001", manifest, spec, 2, 100));
  CHECK(runners == std::vector<std::string>{"00000001/r0", "00000001/r1"});

  auto started = be.drain_events();
  REQUIRE(started.size() == 2);
  CHECK(started[0].kind == TaskEvent::Kind::started);
  CHECK(started[0].t == 100);

  be.advance_to(101);
  auto evs = be.drain_events();
  REQUIRE(evs.size() == 1);
  CHECK(evs[0].text == "r1");
  CHECK(evs[0].t == 101);

  be.advance_to(200);
  evs = be.drain_events();
  REQUIRE(evs.size() == 3);
  CHECK(evs[0].text == "r0");  // t=102
  CHECK(evs[0].t == 102);
  CHECK(evs[1].kind == TaskEvent::Kind::exited);
  CHECK(evs[1].rank == 1);
  CHECK(evs[1].exit_code == 3);
  CHECK(evs[1].t == 104);
  CHECK(evs[2].rank == 0);
  CHECK(evs[2].exit_code == 0);
  CHECK(evs[2].t == 105);
  CHECK(be.live_rank_count() == 0);
  CHECK(be.total_active_s("00000001", 200) == 5);  // frozen at the last exit
}

TEST_CASE("sim: suspension freezes the virtual clock") {
  TempDir store, ws;
  bundle::Cas cas(store.path());
  json script = {{"events", {{{"rank", 0}, {"t", 10}, {"kind", "exit"}, {"code", 0}}}}};
  auto spec = base_spec();
  auto manifest = make_bundle(spec, cas, ws, script);

  SimBackend be("sim0", big_node(), &cas);
  be.provision(make_req("00000002", manifest, spec, 1, 0));
  be.drain_events();

  auto ack = be.suspend("00000002", 3);
  CHECK(ack.active_s == 3);
  CHECK(ack.cpu_s == doctest::Approx(3.0 * 4));
  CHECK(ack.gpu_s == doctest::Approx(3.0 * 1));

  be.advance_to(50);
  CHECK(be.drain_events().empty());  // suspended: nothing moves
  CHECK(be.total_active_s("00000002", 50) == 3);

  be.resume("00000002", 50);
  be.advance_to(56);
  CHECK(be.drain_events().empty());  // active 9s of the 10 needed
  be.advance_to(57);
  auto evs = be.drain_events();
  REQUIRE(evs.size() == 1);
  CHECK(evs[0].kind == TaskEvent::Kind::exited);
  CHECK(evs[0].t == 57);
  CHECK(be.total_active_s("00000002", 100) == 10);
}

TEST_CASE("sim: stop acks only the interval since the last resume") {
  TempDir store, ws;
  bundle::Cas cas(store.path());
  json script = {{"events", {{{"rank", 0}, {"t", 100}, {"kind", "exit"}, {"code", 0}}}}};
  auto spec = base_spec();
  auto manifest = make_bundle(spec, cas, ws, script);

  SimBackend be("sim0", big_node(), &cas);
  be.provision(make_req("00000003", manifest, spec, 1, 0));

  CHECK(be.suspend("00000003", 10).active_s == 10);
  be.resume("00000003", 20);
  auto ack = be.stop("00000003", 0, 35);
  CHECK(ack.active_s == 15);
  CHECK(ack.cpu_s == doctest::Approx(15.0 * 4));
  CHECK(be.stop("00000003", 0, 40).active_s == 0);  // already charged
  CHECK(be.total_active_s("00000003", 99) == 25);
}

TEST_CASE("sim: scripted provision failure names the backend") {
  TempDir store, ws;
  bundle::Cas cas(store.path());
  json script = {{"provision_fail", {"sim0"}}};
  auto spec = base_spec();
  auto manifest = make_bundle(spec, cas, ws, script);

  SimBackend bad("sim0", big_node(), &cas);
  SimBackend good("sim1", big_node(), &cas);
  try {
    bad.provision(make_req("00000004", manifest, spec, 1, 0));
    FAIL("expected provision_failed");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::provision_failed);
    CHECK(std::string(e.what()).find("sim0") != std::string::npos);
  }
  CHECK(!bad.has_job("00000004"));
  CHECK(good.provision(make_req("00000004", manifest, spec, 1, 0)).size() == 1);
}

TEST_CASE("sim: unscripted ranks exit cleanly and see the env contract") {
  TempDir store, ws;
  bundle::Cas cas(store.path());
  auto spec = base_spec();
  spec.env["FOO"] = "bar";
  auto manifest = make_bundle(spec, cas, ws);  // no script at all

  SimBackend be("sim0", big_node(), &cas);
  be.provision(make_req("00000005", manifest, spec, 3, 0));
  be.advance_to(2);
  int exits = 0;
  for (const auto& ev : be.drain_events())
    if (ev.kind == TaskEvent::Kind::exited) {
      ++exits;
      CHECK(ev.exit_code == 0);
      CHECK(ev.t == 1);
    }
  CHECK(exits == 3);

  auto env = be.runner_env("00000005", 2);
  CHECK(env.at("TACC_JOB_ID") == "00000005");
  CHECK(env.at("TACC_NODE_RANK") == "2");
  CHECK(env.at("TACC_NNODES") == "3");
  CHECK(env.at("TACC_NODELIST") == "n0,n1,n2");
  CHECK(env.at("FOO") == "bar");
}

TEST_CASE("sim: identical scripts yield identical event streams") {
  TempDir store, ws;
  bundle::Cas cas(store.path());
  json script = {{"events",
                  {{{"rank", 0}, {"t", 1}, {"kind", "log"}, {"text", "a"}},
                   {{"rank", 1}, {"t", 1}, {"kind", "log"}, {"text", "b"}},
                   {{"rank", 0}, {"t", 3}, {"kind", "exit"}, {"code", 0}},
                   {{"rank", 1}, {"t", 2}, {"kind", "exit"}, {"code", 1}}}}};
  auto spec = base_spec();
  auto manifest = make_bundle(spec, cas, ws, script);

  auto run = [&]() {
    SimBackend be("sim0", big_node(), &cas);
    be.provision(make_req("00000006", manifest, spec, 2, 5));
    std::string out;
    for (int64_t t : {6, 7, 8, 9}) {
      be.advance_to(t);
      for (const auto& ev : be.drain_events())
        out += std::to_string(ev.t) + "/" + std::to_string(ev.rank) + "/" +
               std::to_string(static_cast<int>(ev.kind)) + "/" + ev.text + "/" +
               std::to_string(ev.exit_code) + ";";
    }
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("sim: fetch merges bundle files with scripted writes") {
  TempDir store, ws;
  bundle::Cas cas(store.path());
  json script = {
      {"events",
       {{{"rank", 1}, {"t", 2}, {"kind", "file"}, {"path", "out/metrics.json"}, {"content", "{}"}},
        {{"rank", 0}, {"t", 3}, {"kind", "exit"}}, {{"rank", 1}, {"t", 3}, {"kind", "exit"}}}}};
  auto spec = base_spec();
  auto manifest = make_bundle(spec, cas, ws, script);

  SimBackend be("sim0", big_node(), &cas);
  be.provision(make_req("00000007", manifest, spec, 2, 0));

  SUBCASE("scripted write is invisible until its time comes") {
    CHECK(be.fetch("00000007", "out/*").empty());
  }
  SUBCASE("after the write") {
    be.advance_to(10);
    be.drain_events();
    auto got = be.fetch("00000007", "out/*");
    REQUIRE(got.size() == 1);
    CHECK(got[0].rank == 1);
    CHECK(got[0].path == "out/metrics.json");
    CHECK(got[0].content == "{}");

    // bundle files exist in every rank sandbox; * stays within one segment
    auto py = be.fetch("00000007", "*.py");
    REQUIRE(py.size() == 2);
    CHECK(py[0].rank == 0);
    CHECK(py[1].rank == 1);
    CHECK(py[0].content == "print('hi')\n");
    CHECK(be.fetch("00000007", "*").size() >= 4);  // train.py + sim_script.json per rank
  }
}

// ---- local process backend ----

namespace {

// Drains until pred says we have enough, or the deadline passes.
std::vector<TaskEvent> drain_until(Backend& be, int timeout_ms,
                                   const std::function<bool(const std::vector<TaskEvent>&)>& done) {
  std::vector<TaskEvent> all;
  auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  while (std::chrono::steady_clock::now() < deadline) {
    for (auto& ev : be.drain_events()) all.push_back(std::move(ev));
    if (done(all)) return all;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  return all;
}

bool has_exits(const std::vector<TaskEvent>& evs, int n) {
  int c = 0;
  for (const auto& ev : evs) c += ev.kind == TaskEvent::Kind::exited;
  return c >= n;
}

}  // namespace

TEST_CASE("local: runs a shell entrypoint and captures both streams") {
  TempDir store, ws, work;
  bundle::Cas cas(store.path());
  auto spec = base_spec();
  spec.resources = {1, 0, 256};
  spec.entrypoint = "echo hello; echo oops 1>&2; exit 7";
  auto manifest = make_bundle(spec, cas, ws);

  LocalProcessBackend be("local0", big_node(), &cas, work.path() / "w");
  auto runners = be.provision(make_req("00000010", manifest, spec, 1, 0));
  CHECK(runners == std::vector<std::string>{"00000010/r0"});

  auto evs = drain_until(be, 10000, [](const auto& e) { return has_exits(e, 1); });
  std::string out, err;
  int64_t code = -1;
  for (const auto& ev : evs) {
    if (ev.kind == TaskEvent::Kind::log_line && ev.stream == "stdout") out += ev.text;
    if (ev.kind == TaskEvent::Kind::log_line && ev.stream == "stderr") err += ev.text;
    if (ev.kind == TaskEvent::Kind::exited) code = ev.exit_code;
  }
  CHECK(out == "hello");
  CHECK(err == "oops");
  CHECK(code == 7);
}

TEST_CASE("local: the env contract reaches the process") {
  TempDir store, ws, work;
  bundle::Cas cas(store.path());
  auto spec = base_spec();
  spec.resources = {1, 0, 256};
  spec.env = {{"GREETING", "salut"}};
  spec.entrypoint = "echo \"$TACC_JOB_ID|$TACC_NODE_RANK|$TACC_NNODES|$TACC_NODELIST|$GREETING\"";
  auto manifest = make_bundle(spec, cas, ws);

  LocalProcessBackend be("local0", big_node(), &cas, work.path() / "w");
  be.provision(make_req("00000011", manifest, spec, 2, 0));
  auto evs = drain_until(be, 10000, [](const auto& e) { return has_exits(e, 2); });

  std::set<std::string> lines;
  for (const auto& ev : evs)
    if (ev.kind == TaskEvent::Kind::log_line) lines.insert(ev.text);
  CHECK(lines.count("00000011|0|2|n0,n1|salut"));
  CHECK(lines.count("00000011|1|2|n0,n1|salut"));
}

TEST_CASE("local: stop escalates to SIGKILL after the grace period") {
  TempDir store, ws, work;
  bundle::Cas cas(store.path());
  auto spec = base_spec();
  spec.resources = {1, 0, 256};
  spec.entrypoint = "trap '' TERM; echo ready; sleep 600";
  auto manifest = make_bundle(spec, cas, ws);

  LocalProcessBackend be("local0", big_node(), &cas, work.path() / "w");
  be.provision(make_req("00000012", manifest, spec, 1, 0));
  auto evs = drain_until(be, 10000, [](const auto& e) {
    for (const auto& ev : e)
      if (ev.kind == TaskEvent::Kind::log_line && ev.text == "ready") return true;
    return false;
  });
  REQUIRE(!evs.empty());

  auto t0 = std::chrono::steady_clock::now();
  auto ack = be.stop("00000012", 1, 0);
  auto waited = std::chrono::steady_clock::now() - t0;
  CHECK(waited < std::chrono::seconds(8));
  CHECK(ack.active_s >= 0);

  evs = drain_until(be, 5000, [](const auto& e) { return has_exits(e, 1); });
  int64_t code = -1;
  for (const auto& ev : evs)
    if (ev.kind == TaskEvent::Kind::exited) code = ev.exit_code;
  CHECK(code == 128 + 9);  // had to be SIGKILLed
  CHECK(be.stop("00000012", 1, 0).active_s == 0);  // idempotent re-stop
}

TEST_CASE("local: suspend stops the process group until resume") {
  TempDir store, ws, work;
  bundle::Cas cas(store.path());
  auto spec = base_spec();
  spec.resources = {1, 0, 256};
  spec.entrypoint = "echo ready; sleep 1; echo done";
  auto manifest = make_bundle(spec, cas, ws);

  LocalProcessBackend be("local0", big_node(), &cas, work.path() / "w");
  be.provision(make_req("00000013", manifest, spec, 1, 0));
  drain_until(be, 10000, [](const auto& e) {
    for (const auto& ev : e)
      if (ev.kind == TaskEvent::Kind::log_line && ev.text == "ready") return true;
    return false;
  });

  be.suspend("00000013", 0);
  // the shell is stopped: "done" must not appear even after sleep(1) lapses
  auto evs = drain_until(be, 2000, [](const auto& e) {
    for (const auto& ev : e)
      if (ev.kind == TaskEvent::Kind::log_line && ev.text == "done") return true;
    return false;
  });
  for (const auto& ev : evs) CHECK(ev.text != "done");

  be.resume("00000013", 0);
  evs = drain_until(be, 10000, [](const auto& e) { return has_exits(e, 1); });
  bool saw_done = false;
  int64_t code = -1;
  for (const auto& ev : evs) {
    if (ev.kind == TaskEvent::Kind::log_line && ev.text == "done") saw_done = true;
    if (ev.kind == TaskEvent::Kind::exited) code = ev.exit_code;
  }
  CHECK(saw_done);
  CHECK(code == 0);
}

TEST_CASE("local: fetch returns files the process wrote") {
  TempDir store, ws, work;
  bundle::Cas cas(store.path());
  auto spec = base_spec();
  spec.resources = {1, 0, 256};
  spec.entrypoint = "printf data > result.txt; mkdir -p out; printf 9 > out/acc.txt";
  auto manifest = make_bundle(spec, cas, ws);

  LocalProcessBackend be("local0", big_node(), &cas, work.path() / "w");
  be.provision(make_req("00000014", manifest, spec, 1, 0));
  drain_until(be, 10000, [](const auto& e) { return has_exits(e, 1); });

  auto got = be.fetch("00000014", "result.txt");
  REQUIRE(got.size() == 1);
  CHECK(got[0].content == "data");
  CHECK(got[0].rank == 0);

  got = be.fetch("00000014", "out/*");
  REQUIRE(got.size() == 1);
  CHECK(got[0].path == "out/acc.txt");
  CHECK(got[0].content == "9");

  CHECK_THROWS_AS(be.fetch("no-such-job", "*"), Error);
}
