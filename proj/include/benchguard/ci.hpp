#pragma once

// Nightly CI entry point: configuration, the nightly run, issue payloads and
// the webhook client.
//
// Config file (JSON); relative paths resolve against the file's directory:
//
//   {
//     "registry": "registry",            // optional; built-in workloads when absent
//     "baseline": "store",               // required
//     "output": "out",                   // required
//     "commits": "commits.txt",          // optional; --commits overrides
//     "batch_cache": "store/bs-cache",   // optional; default <baseline>/bs-cache
//     "devices": {"cpu": true, "gpu": true},
//     "policy": {"time_threshold": 0.07, "mem_threshold": 0.07,
//                "leak_threshold_bytes": 1048576, "min_abs_time_us": 1000},
//     "webhook": {"url": "https://...", "token_env": "BENCHGUARD_TOKEN",
//                 "labels": ["performance"]},
//     "provider": {"kind": "simulated", "history": "history.json"}
//              |  {"kind": "command", "build": "make -C src {commit}", "build_timeout_s": 7200},
//     "repeats": 10,
//     "timeout_s": 600
//   }

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "benchguard/bisect.hpp"
#include "benchguard/measurement.hpp"
#include "benchguard/regression.hpp"
#include "benchguard/report.hpp"
#include "benchguard/synthetic.hpp"

namespace benchguard {

enum ExitCode : int {
  kExitClean = 0,
  kExitValidation = 2,
  kExitFindings = 3,
  kExitWebhook = 4,
  kExitMeasurement = 5,
};

struct WebhookConfig {
  std::string url;
  std::string token_env;
  std::vector<std::string> labels = {"performance-regression"};
};

enum class ProviderKind { simulated, command };

struct ProviderConfig {
  ProviderKind kind = ProviderKind::simulated;
  std::filesystem::path history;  // simulated
  std::string build_command;      // command
  std::chrono::seconds build_timeout{7200};
};

struct CliConfig {
  std::optional<std::filesystem::path> registry;
  std::filesystem::path baseline;
  std::filesystem::path output;
  std::optional<std::filesystem::path> commits;
  std::optional<std::filesystem::path> batch_cache;
  std::set<Device> devices = {Device::cpu, Device::gpu};
  RegressionPolicy policy;
  std::optional<WebhookConfig> webhook;
  std::optional<ProviderConfig> provider;
  int repeats = 10;
  std::chrono::seconds timeout{600};

  std::filesystem::path batch_cache_dir() const { return batch_cache.value_or(baseline / "bs-cache"); }

  // Checks that every configured input exists. Runs before any measurement.
  void validate() const {
    policy.validate();
    if (repeats < 1) throw ValidationError("repeats must be >= 1");
    if (timeout.count() < 1) throw ValidationError("timeout_s must be >= 1");
    if (devices.empty()) throw ValidationError("no devices enabled");
    if (registry && !std::filesystem::is_directory(*registry))
      throw ValidationError("registry directory not found: " + registry->string());
    if (commits && !std::filesystem::is_regular_file(*commits))
      throw ValidationError("commits file not found: " + commits->string());
    if (provider) {
      if (provider->kind == ProviderKind::simulated && !std::filesystem::is_regular_file(provider->history))
        throw ValidationError("simulated history not found: " + provider->history.string());
      if (provider->kind == ProviderKind::command && provider->build_command.empty())
        throw ValidationError("command provider needs a build command");
    }
    if (webhook && webhook->url.empty()) throw ValidationError("webhook.url is empty");
  }
};

inline CliConfig load_cli_config(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw ValidationError("config file not found: " + path.string());
  auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ValidationError(path.string() + ": not a JSON object");
  const auto base = std::filesystem::absolute(path).parent_path();
  auto resolve = [&](const std::string& p) { return (base / p).lexically_normal(); };

  static const std::set<std::string> known = {"registry", "baseline", "output",   "commits",  "batch_cache",
                                              "devices",  "policy",   "webhook",  "provider", "repeats",
                                              "timeout_s"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ValidationError(path.string() + ": unknown key '" + k + "'");

  CliConfig c;
  try {
    if (j.contains("registry")) c.registry = resolve(j["registry"].get<std::string>());
    if (!j.contains("baseline")) throw ValidationError(path.string() + ": 'baseline' is required");
    if (!j.contains("output")) throw ValidationError(path.string() + ": 'output' is required");
    c.baseline = resolve(j["baseline"].get<std::string>());
    c.output = resolve(j["output"].get<std::string>());
    if (j.contains("commits")) c.commits = resolve(j["commits"].get<std::string>());
    if (j.contains("batch_cache")) c.batch_cache = resolve(j["batch_cache"].get<std::string>());
    if (j.contains("devices")) {
      c.devices.clear();
      for (auto d : {Device::cpu, Device::gpu})
        if (j["devices"].value(std::string(to_string(d)), false)) c.devices.insert(d);
    }
    if (j.contains("policy")) {
      const auto& p = j["policy"];
      c.policy.time_threshold = p.value("time_threshold", c.policy.time_threshold);
      c.policy.mem_threshold = p.value("mem_threshold", c.policy.mem_threshold);
      c.policy.leak_threshold_bytes = p.value("leak_threshold_bytes", c.policy.leak_threshold_bytes);
      c.policy.min_abs_time_us = p.value("min_abs_time_us", c.policy.min_abs_time_us);
    }
    if (j.contains("webhook")) {
      const auto& w = j["webhook"];
      WebhookConfig wc;
      wc.url = w.at("url").get<std::string>();
      wc.token_env = w.value("token_env", std::string{});
      if (w.contains("labels")) wc.labels = w["labels"].get<std::vector<std::string>>();
      c.webhook = wc;
    }
    if (j.contains("provider")) {
      const auto& p = j["provider"];
      ProviderConfig pc;
      auto kind = p.at("kind").get<std::string>();
      if (kind == "simulated") {
        pc.kind = ProviderKind::simulated;
        pc.history = resolve(p.at("history").get<std::string>());
      } else if (kind == "command") {
        pc.kind = ProviderKind::command;
        pc.build_command = p.at("build").get<std::string>();
        pc.build_timeout = std::chrono::seconds(p.value("build_timeout_s", std::int64_t{7200}));
      } else {
        throw ValidationError(path.string() + ": unknown provider kind '" + kind + "'");
      }
      c.provider = pc;
    }
    c.repeats = j.value("repeats", c.repeats);
    c.timeout = std::chrono::seconds(j.value("timeout_s", std::int64_t{600}));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return c;
}

// Registered workloads: the registry directory when configured, otherwise
// the built-in synthetic models.
inline std::vector<WorkloadSpec> configured_workloads(const CliConfig& c) {
  return c.registry ? load_registry(*c.registry, default_synth_executable()) : list_builtin_workloads();
}

// ---------------------------------------------------------------------------
// Issue filing

struct IssuePayload {
  std::string title;
  std::string body;
  std::vector<std::string> labels;
  std::optional<std::string> culprit;
};

inline ojson to_json(const IssuePayload& p) {
  ojson j;
  j["title"] = p.title;
  j["body"] = p.body;
  j["labels"] = p.labels;
  j["culprit"] = p.culprit ? ojson(*p.culprit) : ojson(nullptr);
  return j;
}

struct WebhookResult {
  bool filed = false;
  int status = 0;  // HTTP status, 0 when no response
  std::string error;
};

inline WebhookResult post_webhook(const WebhookConfig& w, const IssuePayload& payload,
                                  std::chrono::seconds timeout = std::chrono::seconds(10)) {
  WebhookResult out;
  const auto& url = w.url;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    out.error = "webhook url has no scheme: " + url;
    return out;
  }
  auto path_start = url.find('/', scheme_end + 3);
  std::string origin = url.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

  httplib::Client client(origin);
  if (!client.is_valid()) {
    out.error = "invalid webhook url: " + url;
    return out;
  }
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!w.token_env.empty())
    if (const char* tok = std::getenv(w.token_env.c_str()); tok && *tok)
      headers.emplace("Authorization", std::string("Bearer ") + tok);

  auto res = client.Post(path, headers, to_json(payload).dump(), "application/json");
  if (!res) {
    out.error = "webhook request failed: " + httplib::to_string(res.error());
    return out;
  }
  out.status = res->status;
  out.filed = res->status >= 200 && res->status < 300;
  if (!out.filed) out.error = "webhook returned HTTP " + std::to_string(res->status);
  return out;
}

// ---------------------------------------------------------------------------
// Nightly run

struct NightlyInputs {
  std::vector<Commit> commits;  // the day's commits; the last one is the nightly
};

struct NightlyOutcome {
  int exit_code = kExitClean;
  Commit nightly;
  std::optional<Baseline> prior;
  std::vector<ConfigMatrix> matrices;
  std::vector<MeasurementSet> measured;
  DetectionResult detection;
  std::vector<BisectionSession> bisections;
  std::optional<IssuePayload> issue;
  std::optional<WebhookResult> webhook;
  std::string error;  // operational failure, when exit_code is 4 or 5
};

inline std::vector<Commit> nightly_commits(const CliConfig& c, const std::optional<std::filesystem::path>& flag) {
  if (flag) return load_commits(*flag);
  if (c.commits) return load_commits(*c.commits);
  if (c.provider && c.provider->kind == ProviderKind::simulated)
    return load_simulated_history(c.provider->history).commits();
  throw ValidationError("no commit list: pass --commits or set 'commits' in the config");
}

inline ojson nightly_report_json(const NightlyOutcome& o, const CliConfig& c) {
  ojson j;
  j["schema"] = kCiReportSchema;
  j["nightly"] = {{"commit", o.nightly.id}, {"timestamp", o.nightly.timestamp}};
  j["baseline"] = o.prior ? to_json(o.prior->provenance) : ojson(nullptr);
  j["baseline_policy"] = "previous accepted nightly";
  j["policy"] = {{"time_threshold", c.policy.time_threshold},
                 {"mem_threshold", c.policy.mem_threshold},
                 {"leak_threshold_bytes", c.policy.leak_threshold_bytes},
                 {"min_abs_time_us", c.policy.min_abs_time_us}};
  auto m = ojson::array();
  for (const auto& x : o.matrices) m.push_back(to_json(x));
  j["matrices"] = std::move(m);
  j["detection"] = to_json(o.detection);
  auto b = ojson::array();
  for (const auto& s : o.bisections) b.push_back(to_json(s));
  j["bisections"] = std::move(b);
  j["exit_code"] = o.exit_code;
  if (!o.error.empty()) j["error"] = o.error;
  return j;
}

inline std::string nightly_report_markdown(const NightlyOutcome& o, const CliConfig& c) {
  std::ostringstream md;
  md << "# Nightly performance report: " << o.nightly.id << "\n\n";
  if (o.prior)
    md << "Baseline: previous accepted nightly " << o.prior->provenance.commit << ".\n\n";
  else
    md << "Baseline: none (this run establishes it).\n\n";
  md << "## Findings\n\n" << render_findings_markdown(o.detection, c.policy);
  for (const auto& s : o.bisections) md << "\n" << render_bisection_markdown(s);
  md << "\n## Matrix\n\n| Workload | Mode | Device | Status | Detail |\n|---|---|---|---|---|\n";
  for (const auto& m : o.matrices)
    for (const auto& cell : m.cells) {
      md << "| " << m.workload << " | " << to_string(cell.mode) << " | " << to_string(cell.device) << " | "
         << to_string(cell.status) << " | ";
      if (cell.measurement)
        md << "bs " << cell.measurement->config.batch_size.value_or(0) << ", " << cell.measurement->summary.wall_time_us
           << " us";
      else
        md << cell.reason;
      md << " |\n";
    }
  if (!o.measured.empty()) md << "\n## Measurements\n\n" << render_measurements_markdown(o.measured);
  if (!o.error.empty()) md << "\n**Error:** " << o.error << "\n";
  return md.str();
}

inline IssuePayload make_issue(const NightlyOutcome& o, const CliConfig& c) {
  IssuePayload p;
  std::set<std::string> culprits;
  for (const auto& f : o.detection.findings)
    if (f.culprit) culprits.insert(*f.culprit);
  if (culprits.size() == 1) p.culprit = *culprits.begin();
  std::ostringstream title;
  title << "Performance regression in nightly " << o.nightly.id << ": " << o.detection.findings.size() << " finding"
        << (o.detection.findings.size() == 1 ? "" : "s");
  if (p.culprit) title << ", culprit " << *p.culprit;
  p.title = title.str();
  p.body = nightly_report_markdown(o, c);
  p.labels = c.webhook ? c.webhook->labels : WebhookConfig{}.labels;
  return p;
}

struct NightlyProviders {
  std::unique_ptr<BuildProvider> build_owner;
  std::unique_ptr<MeasureProvider> measure_owner;
  std::shared_ptr<SimulatedProvider> simulated;
  BuildProvider* build = nullptr;
  MeasureProvider* measure = nullptr;
};

inline NightlyProviders make_providers(const CliConfig& c) {
  NightlyProviders p;
  InvokeOptions inv;
  inv.timeout = std::chrono::duration_cast<std::chrono::milliseconds>(c.timeout);
  if (!c.provider || c.provider->kind == ProviderKind::simulated) {
    SimulatedHistory h;  // no provider: a single clean commit
    if (c.provider) h = load_simulated_history(c.provider->history);
    Runner inner = c.registry ? subprocess_runner(inv) : builtin_runner();
    p.simulated = std::make_shared<SimulatedProvider>(h, inner);
    p.build = p.simulated.get();
    p.measure = p.simulated.get();
  } else {
    p.build_owner = std::make_unique<CommandBuildProvider>(c.provider->build_command,
                                                           std::chrono::milliseconds(c.provider->build_timeout));
    p.measure_owner = std::make_unique<CommandMeasureProvider>(inv);
    p.build = p.build_owner.get();
    p.measure = p.measure_owner.get();
  }
  return p;
}

// Commits after `since`, when it appears in the list; the whole list otherwise.
inline std::vector<Commit> commits_since(const std::vector<Commit>& commits, const std::string& since) {
  for (std::size_t i = 0; i < commits.size(); ++i)
    if (commits[i].id == since) return {commits.begin() + std::ptrdiff_t(i) + 1, commits.end()};
  return commits;
}

inline void write_nightly_artifacts(const NightlyOutcome& o, const CliConfig& c) {
  std::filesystem::create_directories(c.output);
  write_text_file(c.output / "report.json", nightly_report_json(o, c).dump(2) + "\n");
  write_text_file(c.output / "report.md", nightly_report_markdown(o, c));
  std::error_code ec;
  std::filesystem::remove(c.output / "runs.jsonl", ec);
  std::filesystem::remove(c.output / "measurements.json", ec);
  save_to_result_dir(c.output, o.measured);
  if (o.issue) write_text_file(c.output / "issue.json", to_json(*o.issue).dump(2) + "\n");
}

// Measures the nightly (last commit) over every workload's matrix, detects
// against the stored baseline, bisects each finding, advances the baseline,
// writes reports to the output directory and files an issue on findings.
inline NightlyOutcome run_ci_nightly(const CliConfig& c, const NightlyInputs& in,
                                     std::vector<WorkloadSpec> workloads) {
  c.validate();
  if (in.commits.empty()) throw ValidationError("empty commit list");
  if (workloads.empty()) throw ValidationError("no registered workloads");

  NightlyOutcome o;
  o.nightly = in.commits.back();

  BaselineStore store(c.baseline);
  auto lock = store.lock();
  o.prior = store.load();

  auto providers = make_providers(c);
  auto built = providers.build->build(o.nightly);
  if (!built.artifact) {
    o.exit_code = kExitMeasurement;
    o.error = "nightly build failed: " + built.reason;
    write_nightly_artifacts(o, c);
    return o;
  }
  auto runner = providers.measure->runner_for(o.nightly, *built.artifact);

  BatchSizeCache cache(c.batch_cache_dir());
  MatrixOptions mopts;
  mopts.available_devices = c.devices;
  mopts.batch_cache = &cache;
  mopts.measure.trace_dir = c.output / "traces";
  mopts.search.trace_dir = c.output / "traces" / "search";
  RunConfig base;
  base.repeats = c.repeats;
  for (const auto& spec : workloads) {
    o.matrices.push_back(run_matrix(spec, base, runner, mopts));
    for (const auto& cell : o.matrices.back().cells)
      if (cell.measurement) o.measured.push_back(*cell.measurement);
  }
  if (o.measured.empty()) {
    o.exit_code = kExitMeasurement;
    o.error = "no cell could be measured";
    write_nightly_artifacts(o, c);
    return o;
  }

  o.detection = detect_regressions(o.prior.value_or(Baseline{}), o.measured, c.policy);

  if (!o.detection.findings.empty()) {
    std::map<std::string, const WorkloadSpec*> specs;
    for (const auto& s : workloads) specs[s.name] = &s;
    for (auto& f : o.detection.findings) {
      const MeasurementSet* set = nullptr;
      for (const auto& m : o.measured)
        if (m.key() == f.cell) set = &m;
      // Flagged cells keep older baselines, so each finding bisects from the
      // commit its own baseline value was recorded at.
      BisectionSession session;
      session.commits = commits_since(in.commits, f.baseline_provenance.commit);
      session.baseline_commit = Commit{f.baseline_provenance.commit, f.baseline_provenance.timestamp};
      session.predicate.spec = *specs.at(f.cell.workload);
      session.predicate.config = set->config;
      session.predicate.metric = f.metric;
      session.predicate.baseline_value = f.baseline_value;
      auto r = bisect(session, *providers.build, *providers.measure, c.policy);
      if (r.culprit) f.culprit = r.culprit->id;
      o.bisections.push_back(std::move(session));
    }
  }

  store.save(update_baseline(o.prior, o.measured, o.detection, Provenance{o.nightly.id, o.nightly.timestamp}));

  if (o.detection.findings.empty()) {
    o.exit_code = kExitClean;
    write_nightly_artifacts(o, c);
    return o;
  }

  o.exit_code = kExitFindings;
  o.issue = make_issue(o, c);
  write_nightly_artifacts(o, c);
  if (c.webhook) {
    o.webhook = post_webhook(*c.webhook, *o.issue);
    if (!o.webhook->filed) {
      o.exit_code = kExitWebhook;
      o.error = o.webhook->error;
      write_nightly_artifacts(o, c);
    }
  }
  return o;
}

}  // namespace benchguard
