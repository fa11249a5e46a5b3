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

#include "tacc/exec.hpp"

#include <algorithm>

#include "tacc/errors.hpp"

namespace tacc::exec {

void Registry::add(std::shared_ptr<Backend> backend) {
  const std::string& name = backend->descriptor().name;
  if (find(name)) fail(Errc::schema_invalid, "duplicate backend '" + name + "'");
  backends_.push_back(std::move(backend));
}

Backend* Registry::find(const std::string& name) const {
  for (const auto& b : backends_)
    if (b->descriptor().name == name) return b.get();
  return nullptr;
}

json SelectionTrace::to_json() const {
  json f = json::array();
  for (const auto& r : factors)
    f.push_back({{"layer", r.layer}, {"factor", r.factor}, {"effect", r.effect}});
  return {{"backends", backends}, {"factors", std::move(f)}};
}

SelectionTrace SelectionTrace::from_json(const json& doc) {
  SelectionTrace t;
  try {
    t.backends = doc.at("backends").get<std::vector<std::string>>();
    for (const auto& r : doc.at("factors"))
      t.factors.push_back({r.at("layer").get<std::string>(), r.at("factor").get<std::string>(),
                           r.at("effect").get<std::string>()});
  } catch (const json::exception& ex) {
    fail(Errc::schema_invalid, std::string("malformed selection trace: ") + ex.what());
  }
  return t;
}

SelectionRules SelectionRules::from_json(const json& doc) {
  SelectionRules rules;
  try {
    if (doc.contains("static_rules"))
      for (const auto& r : doc.at("static_rules")) {
        StaticRule sr;
        if (r.contains("bundle_size_gt")) sr.bundle_size_gt = r.at("bundle_size_gt").get<uint64_t>();
        if (r.contains("language")) sr.language = r.at("language").get<std::string>();
        sr.prefer = r.at("prefer").get<std::string>();
        rules.static_rules.push_back(std::move(sr));
      }
    if (doc.contains("runtime_rules"))
      for (const auto& r : doc.at("runtime_rules"))
        rules.runtime_rules.push_back(
            {r.at("duration_lt_s").get<int64_t>(), r.at("prefer").get<std::string>()});
  } catch (const json::exception& ex) {
    fail(Errc::schema_invalid, std::string("malformed selection rules: ") + ex.what());
  }
  return rules;
}

json SelectionRules::to_json() const {
  json sr = json::array();
  for (const auto& r : static_rules)
    sr.push_back({{"bundle_size_gt", r.bundle_size_gt},
                  {"language", r.language},
                  {"prefer", r.prefer}});
  json rr = json::array();
  for (const auto& r : runtime_rules)
    rr.push_back({{"duration_lt_s", r.duration_lt_s}, {"prefer", r.prefer}});
  return {{"static_rules", std::move(sr)}, {"runtime_rules", std::move(rr)}};
}

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) {
    if (!out.empty()) out += ",";
    out += s;
  }
  return out.empty() ? "-" : out;
}

}  // namespace

SelectionTrace select_backend(const schema::TaskSpec& spec,
                              const bundle::StaticCharacteristics& static_chars,
                              int64_t expected_duration_s, const Registry& registry,
                              const std::set<std::string>& down_backends,
                              const SelectionRules& rules) {
  // capable = healthy and able to host the per-node request
  std::vector<std::string> capable;  // registry order
  for (const auto& b : registry.all()) {
    const auto& d = b->descriptor();
    if (down_backends.count(d.name)) continue;
    if (!spec.resources.fits_in(d.max_per_node)) continue;
    capable.push_back(d.name);
  }
  if (capable.empty())
    fail(Errc::backend_unavailable, "no healthy backend satisfies the resource request");

  SelectionTrace trace;
  auto placed = [&](const std::string& name) {
    return std::find(trace.backends.begin(), trace.backends.end(), name) != trace.backends.end();
  };
  auto is_capable = [&](const std::string& name) {
    return std::find(capable.begin(), capable.end(), name) != capable.end();
  };

  // layer 1 (schema): the user's stated preference wins outright
  std::vector<std::string> from_pref;
  for (const auto& name : spec.runtime_preference)
    if (is_capable(name) && !placed(name)) {
      trace.backends.push_back(name);
      from_pref.push_back(name);
    }
  trace.factors.push_back({"schema", "user-indicated preference",
                           spec.runtime_preference.empty()
                               ? "no preference stated"
                               : "ranked " + join(from_pref) + " first"});

  // layer 2 (compiler): static characteristics of the compiled bundle
  std::vector<std::string> from_static;
  for (const auto& r : rules.static_rules) {
    bool applies = (r.bundle_size_gt > 0 && static_chars.bundle_size_bytes > r.bundle_size_gt) ||
                   (!r.language.empty() && r.language == static_chars.language_guess);
    if (applies && is_capable(r.prefer) && !placed(r.prefer)) {
      trace.backends.push_back(r.prefer);
      from_static.push_back(r.prefer);
    }
  }
  trace.factors.push_back({"compiler",
                           "static characteristic: language, task size",
                           from_static.empty() ? "no rule applied"
                                               : "ranked " + join(from_static) + " next"});

  // layer 3 (scheduling): expected duration
  std::vector<std::string> from_runtime;
  for (const auto& r : rules.runtime_rules) {
    if (expected_duration_s < r.duration_lt_s && is_capable(r.prefer) && !placed(r.prefer)) {
      trace.backends.push_back(r.prefer);
      from_runtime.push_back(r.prefer);
    }
  }
  trace.factors.push_back({"scheduling",
                           "runtime characteristic: expected duration",
                           from_runtime.empty() ? "no rule applied"
                                                : "ranked " + join(from_runtime) + " next"});

  // layer 4 (execution): every remaining capable backend is a fallback
  std::vector<std::string> fallbacks;
  for (const auto& name : capable)
    if (!placed(name)) {
      trace.backends.push_back(name);
      fallbacks.push_back(name);
    }
  trace.factors.push_back({"execution", "fail-safe switching",
                           fallbacks.empty() ? "no additional fallbacks"
                                             : "appended " + join(fallbacks)});

  return trace;
}

std::optional<std::string> failover_next(const SelectionTrace& trace,
                                         const std::set<std::string>& attempted,
                                         const std::set<std::string>& down_backends) {
  for (const auto& name : trace.backends)
    if (!attempted.count(name) && !down_backends.count(name)) return name;
  return std::nullopt;
}

std::map<std::string, std::string> rank_env(const ProvisionRequest& req, int64_t rank) {
  auto env = req.env;
  std::string nodelist;
  for (const auto& [node, _] : req.placement) {
    if (!nodelist.empty()) nodelist += ",";
    nodelist += node;
  }
  env["TACC_JOB_ID"] = req.job_id;
  env["TACC_NODE_RANK"] = std::to_string(rank);
  env["TACC_NNODES"] = std::to_string(req.placement.size());
  env["TACC_NODELIST"] = nodelist;
  return env;
}

}  // namespace tacc::exec
