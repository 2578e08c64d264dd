#pragma once

// First-bad-commit search over one day's commits.
//
// Commits are ordered by submission timestamp. A probe builds a commit
// through a BuildProvider, measures the predicate cell through a
// MeasureProvider, and classifies the result as good or bad against the
// baseline value with the same threshold rule detection uses. The search
// assumes a single step change: good ... good bad ... bad.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "benchguard/errors.hpp"
#include "benchguard/measurement.hpp"
#include "benchguard/process.hpp"
#include "benchguard/regression.hpp"
#include "benchguard/synthetic.hpp"
#include "benchguard/workload.hpp"

namespace benchguard {

struct Commit {
  std::string id;
  std::int64_t timestamp = 0;
  friend bool operator==(const Commit&, const Commit&) = default;
};

// Commit list file: one commit per line, `<id> [<unix timestamp>]`. Lines
// without a timestamp take their line number. Blank lines and '#' comments
// are ignored. The result is stably sorted by timestamp.
inline std::vector<Commit> parse_commits(std::string_view text) {
  std::vector<Commit> commits;
  std::istringstream in{std::string(text)};
  std::int64_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    auto fields = detail::split_ws(line);
    if (fields.empty() || fields[0][0] == '#') continue;
    if (fields.size() > 2) throw ParseError("commits line " + std::to_string(lineno) + ": expected '<id> [timestamp]'");
    Commit c{fields[0], lineno};
    if (fields.size() == 2) c.timestamp = detail::parse_int(fields[1], "commits line " + std::to_string(lineno));
    commits.push_back(std::move(c));
  }
  std::stable_sort(commits.begin(), commits.end(),
                   [](const Commit& a, const Commit& b) { return a.timestamp < b.timestamp; });
  return commits;
}

inline std::vector<Commit> load_commits(const std::filesystem::path& p) { return parse_commits(read_file(p)); }

// ---------------------------------------------------------------------------
// Providers

struct BuildOutcome {
  std::optional<std::string> artifact;  // set when the build succeeded
  std::string reason;                   // why not, otherwise

  static BuildOutcome built(std::string artifact) { return {std::move(artifact), {}}; }
  static BuildOutcome unbuildable(std::string reason) { return {std::nullopt, std::move(reason)}; }
};

class BuildProvider {
 public:
  virtual ~BuildProvider() = default;
  virtual BuildOutcome build(const Commit& commit) = 0;
};

class MeasureProvider {
 public:
  virtual ~MeasureProvider() = default;
  // Runner that executes workloads against the given build artifact.
  virtual Runner runner_for(const Commit& commit, const std::string& artifact) = 0;
};

// Runs a shell command template with every `{commit}` replaced by the commit
// id. Exit status 0 means built; the last non-empty stdout line is the
// artifact path (the commit id when the command prints nothing).
class CommandBuildProvider : public BuildProvider {
 public:
  explicit CommandBuildProvider(std::string command_template, std::chrono::milliseconds timeout = std::chrono::hours(2))
      : template_(std::move(command_template)), timeout_(timeout) {}

  std::string command_for(const Commit& c) const {
    std::string cmd = template_;
    for (std::size_t pos = 0; (pos = cmd.find("{commit}", pos)) != std::string::npos; pos += c.id.size())
      cmd.replace(pos, 8, c.id);
    return cmd;
  }

  BuildOutcome build(const Commit& c) override {
    auto res = run_process({"/bin/sh", "-c", command_for(c)}, ProcessOptions{{{"BENCHGUARD_COMMIT", c.id}}, timeout_});
    if (res.timed_out) return BuildOutcome::unbuildable("build timed out");
    if (res.signaled || res.exit_code != 0) {
      auto tail = res.err.size() > 400 ? res.err.substr(res.err.size() - 400) : res.err;
      return BuildOutcome::unbuildable("build failed (exit " + std::to_string(res.exit_code) + "): " + tail);
    }
    std::string artifact;
    for (const auto& line : detail::split(res.out, '\n')) artifact = line;
    return BuildOutcome::built(artifact.empty() ? c.id : artifact);
  }

 private:
  std::string template_;
  std::chrono::milliseconds timeout_;
};

// Launches workload processes with BENCHGUARD_ARTIFACT and BENCHGUARD_COMMIT
// set, so adapters can load the build under test.
class CommandMeasureProvider : public MeasureProvider {
 public:
  explicit CommandMeasureProvider(InvokeOptions base = {}) : base_(std::move(base)) {}

  Runner runner_for(const Commit& c, const std::string& artifact) override {
    auto opts = base_;
    opts.extra_env["BENCHGUARD_ARTIFACT"] = artifact;
    opts.extra_env["BENCHGUARD_COMMIT"] = c.id;
    return subprocess_runner(opts);
  }

 private:
  InvokeOptions base_;
};

// ---------------------------------------------------------------------------
// Simulated history
//
// A seeded day of commits for tests and demos, described in JSON:
//
//   {"n": 70, "culprit": 42, "step": 0.2, "noise": 0.03, "metric": "wall_time",
//    "unbuildable": [35], "measurement_failures": [], "seed": 7,
//    "prefix": "c", "start_timestamp": 1700000000}
//
// Commit i is "<prefix>-<i, 4 digits>". Commits at or after `culprit` scale
// `metric` by (1 + step); wall time additionally carries uniform relative
// noise in [-noise, +noise] per run. Ids outside the history (for example the
// previous nightly) behave like pre-culprit commits. A null culprit means no
// regression.

struct SimulatedHistory {
  std::int64_t n = 1;
  std::optional<std::int64_t> culprit;
  double step = 0.2;
  double noise = 0.0;
  Metric metric = Metric::wall_time;
  std::set<std::int64_t> unbuildable;
  std::set<std::int64_t> measurement_failures;
  std::uint64_t seed = 1;
  std::string prefix = "c";
  std::int64_t start_timestamp = 1'700'000'000;

  void validate() const {
    if (n < 1) throw ValidationError("simulated history needs n >= 1");
    if (culprit && (*culprit < 0 || *culprit >= n)) throw ValidationError("culprit index out of range");
    if (!(step > -1.0)) throw ValidationError("step must be > -1");
    if (noise < 0 || noise >= 1) throw ValidationError("noise must be in [0, 1)");
  }

  std::string id_of(std::int64_t i) const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04lld", static_cast<long long>(i));
    return prefix + "-" + buf;
  }

  std::optional<std::int64_t> index_of(const std::string& id) const {
    auto head = prefix + "-";
    if (id.rfind(head, 0) != 0) return std::nullopt;
    try {
      std::size_t used = 0;
      auto i = std::stoll(id.substr(head.size()), &used);
      if (used != id.size() - head.size() || i < 0 || i >= n) return std::nullopt;
      return i;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  std::vector<Commit> commits() const {
    std::vector<Commit> v;
    for (std::int64_t i = 0; i < n; ++i) v.push_back({id_of(i), start_timestamp + 600 * i});
    return v;
  }

  bool regressed(std::int64_t index) const { return culprit && index >= *culprit; }

  // Linear-scan reference: first commit carrying the step.
  std::optional<std::int64_t> first_bad() const { return culprit; }
};

inline SimulatedHistory simulated_history_from_json(const nlohmann::json& j) {
  try {
    SimulatedHistory h;
    h.n = j.at("n").get<std::int64_t>();
    if (auto it = j.find("culprit"); it != j.end() && !it->is_null()) h.culprit = it->get<std::int64_t>();
    h.step = j.value("step", 0.2);
    h.noise = j.value("noise", 0.0);
    h.metric = parse_metric(j.value("metric", std::string("wall_time")));
    for (auto i : j.value("unbuildable", std::vector<std::int64_t>{})) h.unbuildable.insert(i);
    for (auto i : j.value("measurement_failures", std::vector<std::int64_t>{})) h.measurement_failures.insert(i);
    h.seed = j.value("seed", std::uint64_t{1});
    h.prefix = j.value("prefix", std::string("c"));
    h.start_timestamp = j.value("start_timestamp", std::int64_t{1'700'000'000});
    h.validate();
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("simulated history: ") + e.what());
  }
}

inline nlohmann::ordered_json to_json(const SimulatedHistory& h) {
  nlohmann::ordered_json j;
  j["n"] = h.n;
  j["culprit"] = h.culprit ? nlohmann::ordered_json(*h.culprit) : nlohmann::ordered_json(nullptr);
  j["step"] = h.step;
  j["noise"] = h.noise;
  j["metric"] = to_string(h.metric);
  j["unbuildable"] = h.unbuildable;
  j["measurement_failures"] = h.measurement_failures;
  j["seed"] = h.seed;
  j["prefix"] = h.prefix;
  j["start_timestamp"] = h.start_timestamp;
  return j;
}

inline SimulatedHistory load_simulated_history(const std::filesystem::path& p) {
  auto j = nlohmann::json::parse(read_file(p), nullptr, false);
  if (j.is_discarded()) throw ParseError(p.string() + ": invalid JSON");
  return simulated_history_from_json(j);
}

namespace detail {

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

// Build and measure provider backed by a SimulatedHistory. Workload metrics
// come from `inner` (the in-process built-in runner by default) and are then
// scaled per the history.
class SimulatedProvider : public BuildProvider, public MeasureProvider {
 public:
  explicit SimulatedProvider(SimulatedHistory history, Runner inner = builtin_runner())
      : history_(std::move(history)), inner_(std::move(inner)) {
    history_.validate();
  }

  const SimulatedHistory& history() const { return history_; }

  BuildOutcome build(const Commit& c) override {
    std::lock_guard lock(mu_);
    ++builds_;
    auto i = history_.index_of(c.id);
    if (i && history_.unbuildable.count(*i)) return BuildOutcome::unbuildable("simulated build failure at " + c.id);
    return BuildOutcome::built("sim://" + c.id);
  }

  Runner runner_for(const Commit& c, const std::string&) override {
    auto index = history_.index_of(c.id);
    const auto& h = history_;
    Runner inner = inner_;
    return [h, inner, index, id = c.id](const WorkloadSpec& spec, const RunRequest& req, const RunContext& ctx) {
      if (index && h.measurement_failures.count(*index)) {
        RunResult r;
        r.exit_class = ExitClass::workload_error;
        r.diagnostic = "simulated measurement failure at " + id;
        return r;
      }
      auto r = inner(spec, req, ctx);
      if (!r.ok()) return r;
      const double factor = index && h.regressed(*index) ? 1.0 + h.step : 1.0;
      auto scale = [](std::int64_t v, double f) { return std::max<std::int64_t>(1, std::llround(double(v) * f)); };
      double wall_factor = h.metric == Metric::wall_time ? factor : 1.0;
      if (h.noise > 0) {
        std::uint64_t key = detail::fnv1a(spec.name);
        key = detail::fnv1a(to_string(req.mode), key);
        key = detail::fnv1a(to_string(req.device), key);
        key = detail::fnv1a(id, key);
        auto u = detail::unit_symmetric(detail::mix64(detail::mix64(h.seed ^ key) ^ std::uint64_t(ctx.run_index)));
        wall_factor *= 1.0 + h.noise * u;
      }
      r.metrics.wall_time_us = scale(r.metrics.wall_time_us, wall_factor);
      switch (h.metric) {
        case Metric::peak_cpu_mem: r.metrics.peak_cpu_mem_bytes = scale(r.metrics.peak_cpu_mem_bytes, factor); break;
        case Metric::peak_gpu_mem:
          if (r.metrics.peak_gpu_mem_bytes > 0)
            r.metrics.peak_gpu_mem_bytes = scale(r.metrics.peak_gpu_mem_bytes, factor);
          break;
        case Metric::leak:
          r.metrics.post_run_resident_bytes = scale(r.metrics.post_run_resident_bytes, factor);
          break;
        case Metric::wall_time: break;
      }
      return r;
    };
  }

  std::int64_t builds() const {
    std::lock_guard lock(mu_);
    return builds_;
  }

 private:
  SimulatedHistory history_;
  Runner inner_;
  mutable std::mutex mu_;
  std::int64_t builds_ = 0;
};

// ---------------------------------------------------------------------------
// Probing

enum class ProbeKind { good, bad, unbuildable, measurement_failed };

inline std::string_view to_string(ProbeKind k) {
  switch (k) {
    case ProbeKind::good: return "good";
    case ProbeKind::bad: return "bad";
    case ProbeKind::unbuildable: return "unbuildable";
    case ProbeKind::measurement_failed: return "measurement_failed";
  }
  return "?";
}

struct ProbeOutcome {
  ProbeKind kind = ProbeKind::unbuildable;
  std::optional<Metrics> metrics;  // good / bad
  std::int64_t observed = 0;
  double ratio = 0.0;
  std::string reason;  // unbuildable / measurement_failed

  bool decisive() const { return kind == ProbeKind::good || kind == ProbeKind::bad; }
};

// The cell and metric a bisection tests, and the value it is judged against.
struct BisectPredicate {
  WorkloadSpec spec;
  RunConfig config;  // batch size resolved
  Metric metric = Metric::wall_time;
  std::int64_t baseline_value = 0;

  CellKey cell() const { return {spec.name, config.mode, config.device}; }
};

inline ProbeOutcome probe_commit(const Commit& commit, BuildProvider& builder, MeasureProvider& measurer,
                                 const BisectPredicate& pred, const RegressionPolicy& policy) {
  ProbeOutcome out;
  BuildOutcome built;
  try {
    built = builder.build(commit);
  } catch (const std::exception& e) {
    out.kind = ProbeKind::unbuildable;
    out.reason = std::string("build provider error: ") + e.what();
    return out;
  }
  if (!built.artifact) {
    out.kind = ProbeKind::unbuildable;
    out.reason = built.reason.empty() ? "unbuildable" : built.reason;
    return out;
  }
  try {
    auto runner = measurer.runner_for(commit, *built.artifact);
    auto set = measure(pred.spec, pred.config, runner);
    out.metrics = set.summary;
    out.observed = metric_value(set.summary, pred.metric);
    out.ratio = pred.baseline_value > 0 ? double(out.observed) / double(pred.baseline_value) : 0.0;
    out.kind = is_regression(pred.metric, pred.baseline_value, out.observed, policy, /*apply_floor=*/false)
                   ? ProbeKind::bad
                   : ProbeKind::good;
  } catch (const std::exception& e) {
    out.kind = ProbeKind::measurement_failed;
    out.reason = e.what();
  }
  return out;
}

// Extra probes allowed beyond ceil(log2 n) for skips and boundary checks.
inline constexpr std::int64_t kBisectSkipAllowance = 4;

struct ProbeLogEntry {
  Commit commit;
  std::int64_t index = -1;  // position in the session's commit list, -1 for the baseline commit
  ProbeOutcome outcome;
};

struct BisectionSession {
  std::vector<Commit> commits;           // timestamp order
  std::optional<Commit> baseline_commit; // last known-good (previous nightly)
  BisectPredicate predicate;

  std::vector<ProbeLogEntry> probe_log;
  std::optional<Commit> culprit;
  std::string inconclusive_reason;

  bool conclusive() const { return culprit.has_value(); }
};

namespace detail {

// Serial prober with a per-commit outcome cache. Measurement failures are
// retried once and then recorded as unbuildable.
class Prober {
 public:
  Prober(BisectionSession& s, BuildProvider& b, MeasureProvider& m, const RegressionPolicy& p)
      : session_(s), builder_(b), measurer_(m), policy_(p) {}

  ProbeOutcome probe(const Commit& c, std::int64_t index) {
    {
      std::lock_guard lock(mu_);
      if (auto it = cache_.find(c.id); it != cache_.end()) return it->second;
    }
    auto outcome = run(c, index);
    if (outcome.kind == ProbeKind::measurement_failed) {
      outcome = run(c, index);
      if (outcome.kind == ProbeKind::measurement_failed) {
        outcome.kind = ProbeKind::unbuildable;
        outcome.reason = "measurement failed twice: " + outcome.reason;
      }
    }
    std::lock_guard lock(mu_);
    cache_[c.id] = outcome;
    return outcome;
  }

  bool known_unbuildable(const Commit& c) const {
    std::lock_guard lock(mu_);
    auto it = cache_.find(c.id);
    return it != cache_.end() && it->second.kind == ProbeKind::unbuildable;
  }

 private:
  ProbeOutcome run(const Commit& c, std::int64_t index) {
    auto o = probe_commit(c, builder_, measurer_, session_.predicate, policy_);
    session_.probe_log.push_back({c, index, o});
    return o;
  }

  BisectionSession& session_;
  BuildProvider& builder_;
  MeasureProvider& measurer_;
  const RegressionPolicy& policy_;
  mutable std::mutex mu_;
  std::map<std::string, ProbeOutcome> cache_;
};

}  // namespace detail

struct BisectResult {
  std::optional<Commit> culprit;
  std::string inconclusive_reason;
};

// Binary search for the first bad commit. The last commit is probed first
// and must be bad; the baseline commit, when given, is probed and must not
// be bad. Unbuildable midpoints are replaced by the nearest untried
// neighbour inside the open range, alternating +1, -1, +2, -2, ...
inline BisectResult bisect(BisectionSession& session, BuildProvider& builder, MeasureProvider& measurer,
                           const RegressionPolicy& policy) {
  policy.validate();
  if (session.commits.empty()) throw ValidationError("bisect: empty commit range");
  session.probe_log.clear();
  session.culprit.reset();
  session.inconclusive_reason.clear();

  detail::Prober prober(session, builder, measurer, policy);
  const auto& commits = session.commits;
  const auto n = static_cast<std::int64_t>(commits.size());

  auto finish = [&](std::optional<Commit> culprit, std::string reason) {
    session.culprit = culprit;
    session.inconclusive_reason = reason;
    return BisectResult{std::move(culprit), std::move(reason)};
  };

  auto last = prober.probe(commits.back(), n - 1);
  if (last.kind == ProbeKind::good) return finish(std::nullopt, "regression not reproduced");
  if (last.kind != ProbeKind::bad)
    return finish(std::nullopt, "last commit could not be measured: " + last.reason);

  if (session.baseline_commit) {
    auto base = prober.probe(*session.baseline_commit, -1);
    if (base.kind == ProbeKind::bad) return finish(std::nullopt, "baseline commit is already bad");
  }

  std::int64_t lo = -1;     // known good (the baseline side)
  std::int64_t hi = n - 1;  // known bad
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    std::optional<std::int64_t> decided;
    bool bad = false;
    for (std::int64_t k = 0; !decided; ++k) {
      // Offsets 0, +1, -1, +2, -2, ...
      const std::int64_t offset = k == 0 ? 0 : (k % 2 == 1 ? (k + 1) / 2 : -(k / 2));
      if (std::abs(offset) > hi - lo) break;
      const std::int64_t p = mid + offset;
      if (p <= lo || p >= hi) continue;
      if (prober.known_unbuildable(commits[std::size_t(p)])) continue;
      auto o = prober.probe(commits[std::size_t(p)], p);
      if (o.kind == ProbeKind::unbuildable) continue;
      decided = p;
      bad = o.kind == ProbeKind::bad;
    }
    if (!decided) {
      return finish(std::nullopt, "unbuildable range: every commit between " +
                                      (lo < 0 ? std::string("the baseline") : commits[std::size_t(lo)].id) + " and " +
                                      commits[std::size_t(hi)].id + " is unbuildable");
    }
    if (bad)
      hi = *decided;
    else
      lo = *decided;
  }
  return finish(commits[std::size_t(hi)], {});
}

// Convenience: ceil(log2 n) for probe budgets.
inline std::int64_t ceil_log2(std::int64_t n) {
  std::int64_t k = 0;
  while ((std::int64_t{1} << k) < n) ++k;
  return k;
}

}  // namespace benchguard
