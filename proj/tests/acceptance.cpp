// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>

#include "benchguard/analytics.hpp"
#include "benchguard/bisect.hpp"
#include "benchguard/ci.hpp"
#include "benchguard/report.hpp"
#include "benchguard/synthetic.hpp"
#include "benchguard/trace.hpp"

namespace bg = benchguard;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("benchguard-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

bg::TraceEvent event(bg::EventCategory c, std::int64_t start, std::int64_t dur, std::int64_t stream) {
  bg::TraceEvent e;
  e.category = c;
  e.start_us = start;
  e.duration_us = dur;
  e.stream_id = stream;
  e.name = std::string(bg::to_string(c));
  return e;
}

// ---------------------------------------------------------------------------

Outcome decomposition_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200 && o.pass; ++trial) {
    const std::int64_t wall = std::uniform_int_distribution<std::int64_t>(1, 50000)(rng);
    const int n = std::uniform_int_distribution<int>(0, 1000)(rng);
    std::vector<bg::TraceEvent> events;
    for (int i = 0; i < n; ++i) {
      auto start = std::uniform_int_distribution<std::int64_t>(0, wall - 1)(rng);
      auto dur = std::uniform_int_distribution<std::int64_t>(0, std::min<std::int64_t>(wall - start, 2000))(rng);
      auto cat = static_cast<bg::EventCategory>(std::uniform_int_distribution<int>(0, 4)(rng));
      events.push_back(event(cat, start, dur, std::uniform_int_distribution<int>(0, 3)(rng)));
    }
    // Per-microsecond sampling: compute wins over host/device copies.
    std::vector<char> compute(std::size_t(wall), 0), copy(std::size_t(wall), 0);
    for (const auto& e : events)
      for (auto t = e.start_us; t < e.end_us(); ++t) {
        if (e.category == bg::EventCategory::kernel || e.category == bg::EventCategory::memcpy_d2d) compute[t] = 1;
        if (e.category == bg::EventCategory::memcpy_h2d || e.category == bg::EventCategory::memcpy_d2h) copy[t] = 1;
      }
    std::int64_t active = 0, movement = 0;
    for (std::int64_t t = 0; t < wall; ++t) {
      if (compute[t])
        ++active;
      else if (copy[t])
        ++movement;
    }
    const std::int64_t idle = wall - active - movement;
    auto d = bg::decompose(events, wall);
    const std::string at = "trial " + std::to_string(trial);
    o.require(d.active_fraction == double(active) / double(wall), at + ": active fraction");
    o.require(d.movement_fraction == double(movement) / double(wall), at + ": movement fraction");
    o.require(d.idle_fraction == double(idle) / double(wall), at + ": idle fraction");
  }
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "took " + std::to_string(secs) + " s");
  if (o.pass) o.detail = "200 traces, " + bg::format_fixed(secs, 2) + " s";
  return o;
}

Outcome decomposition_degenerate() {
  Outcome o;
  auto empty = bg::decompose({}, 1000);
  o.require(empty.active_fraction == 0 && empty.movement_fraction == 0 && empty.idle_fraction == 1, "empty trace");
  auto full = bg::decompose({event(bg::EventCategory::kernel, 0, 1000, 0)}, 1000);
  o.require(full.active_fraction == 1 && full.movement_fraction == 0 && full.idle_fraction == 0, "full-span kernel");
  // Kernels cover [0, 50) ms across two overlapping launches; the copy
  // [40, 70) ms is half hidden under compute.
  auto worked = bg::decompose({event(bg::EventCategory::kernel, 0, 30000, 0),
                               event(bg::EventCategory::kernel, 20000, 30000, 1),
                               event(bg::EventCategory::memcpy_h2d, 40000, 30000, 2)},
                              100000);
  o.require(worked.active_fraction == 0.50 && worked.movement_fraction == 0.20 && worked.idle_fraction == 0.30,
            "compute-priority case gave " + bg::to_json(worked).dump());
  return o;
}

Outcome table_fixture() {
  Outcome o;
  bg::BreakdownTable t;
  t.rows.push_back({"Computer Vision", bg::Mode::train, 53.1, 2.1, 44.8, 1});
  auto md = bg::render_breakdown_markdown(t);
  o.require(md.rfind("| Task | Train GPU activeness | Train Data movement | Train GPU idleness | Inference GPU activeness "
                     "| Inference Data movement | Inference GPU idleness |\n|---|",
                     0) == 0,
            "header layout");
  o.require(md.find("\n| Computer Vision | 53.1 | 2.1 | 44.8 | - | - | - |\n") != std::string::npos, "row layout");
  o.require(bg::breakdown_row_sums_ok(t.rows[0]), "row sum " + std::to_string(t.rows[0].sum()));
  return o;
}

Outcome median_discipline() {
  Outcome o;
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 500 && o.pass; ++trial) {
    std::vector<bg::RunResult> runs(10);
    std::vector<std::int64_t> walls;
    for (auto& r : runs) {
      r.exit_class = bg::ExitClass::ok;
      r.metrics.wall_time_us = std::uniform_int_distribution<std::int64_t>(100, 130)(rng);  // ties are common
      walls.push_back(r.metrics.wall_time_us);
    }
    auto sorted = walls;
    std::sort(sorted.begin(), sorted.end());
    const auto median = sorted[(sorted.size() - 1) / 2];
    const auto first = std::size_t(std::find(walls.begin(), walls.end(), median) - walls.begin());
    auto got = bg::select_median_run(runs);
    o.require(got == first, "trial " + std::to_string(trial) + ": index " + std::to_string(got));
    for (int p = 0; p < 5; ++p) {
      std::shuffle(runs.begin(), runs.end(), rng);
      o.require(runs[bg::select_median_run(runs)].metrics.wall_time_us == median,
                "trial " + std::to_string(trial) + ": permutation changed the median");
    }
  }
  if (o.pass) o.detail = "500 sets";
  return o;
}

Outcome batch_search() {
  Outcome o;
  auto runner = bg::subprocess_runner();
  auto spec = [](const char* name) {
    return bg::spec_for_model(*bg::find_builtin_model(name), BENCHGUARD_TEST_SYNTH_EXE);
  };
  auto sequence = [](const bg::SearchResult& r) {
    std::vector<std::int64_t> v;
    for (const auto& p : r.probes) v.push_back(p.batch_size);
    return v;
  };
  auto conv = bg::search_batch_size(spec("synth-conv"), bg::Mode::eval, bg::Device::gpu, runner);
  o.require(conv.batch_size == 64, "conv chose " + std::to_string(conv.batch_size));
  o.require(sequence(conv) == std::vector<std::int64_t>{1, 2, 4, 8, 16, 32, 64, 128, 256, 512}, "conv probe sequence");
  o.require(conv.probes.back().exit_class == bg::ExitClass::oom, "conv stops at oom");
  auto mono = bg::search_batch_size(spec("synth-mono"), bg::Mode::eval, bg::Device::gpu, runner);
  o.require(mono.batch_size == 16, "mono chose " + std::to_string(mono.batch_size));
  o.require(sequence(mono) == std::vector<std::int64_t>{1, 2, 4, 8, 16, 32}, "mono probe sequence");
  try {
    bg::search_batch_size(spec("synth-tiny"), bg::Mode::eval, bg::Device::gpu, runner);
    o.require(false, "tiny returned a batch size");
  } catch (const bg::SearchError& e) {
    o.require(e.kind() == bg::SearchError::Kind::no_feasible_batch, std::string("tiny: ") + e.what());
  }
  if (o.pass) o.detail = "64, 16, no-feasible-batch";
  return o;
}

Outcome geomean_algebra() {
  Outcome o;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> logu(-6.0, 6.0);
  auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
  for (int i = 0; i < 1000 && o.pass; ++i) {
    const double x = std::exp(logu(rng));
    o.require(rel(bg::geomean({x, 1.0 / x}), 1.0) <= 1e-12, "reciprocal pair");
    const auto n = std::uniform_int_distribution<int>(1, 30)(rng);
    const double c = std::exp(logu(rng));
    std::vector<double> a, scaled;
    for (int k = 0; k < n; ++k) {
      a.push_back(std::exp(logu(rng)));
      scaled.push_back(a.back() * c);
    }
    o.require(rel(bg::geomean(scaled), c * bg::geomean(a)) <= 1e-12, "scale property");
    const double y = std::exp(logu(rng));
    o.require(rel(bg::speedup_ratio(x, y), 1.0 / bg::speedup_ratio(y, x)) <= 1e-12, "antisymmetry");
  }
  if (o.pass) o.detail = "1000 inputs";
  return o;
}

Outcome detection_boundary() {
  Outcome o;
  bg::RegressionPolicy policy;
  o.require(policy.time_threshold == 0.07 && policy.mem_threshold == 0.07, "default threshold is not 7%");
  const std::int64_t b = 1'000'000'000;
  for (auto metric : {bg::Metric::wall_time, bg::Metric::peak_cpu_mem, bg::Metric::peak_gpu_mem}) {
    for (double delta : {+1e-6, -1e-6}) {
      bg::MeasurementSet s;
      s.workload = "w";
      s.config.device = bg::Device::gpu;
      s.summary = {b, b, b, 0};
      auto baseline = bg::update_baseline(std::nullopt, {s}, {}, {"c0", 0});
      auto observed = std::int64_t(std::llround(double(b) * (1.070 + delta)));
      if (metric == bg::Metric::wall_time) s.summary.wall_time_us = observed;
      if (metric == bg::Metric::peak_cpu_mem) s.summary.peak_cpu_mem_bytes = observed;
      if (metric == bg::Metric::peak_gpu_mem) s.summary.peak_gpu_mem_bytes = observed;
      auto d = bg::detect_regressions(baseline, {s}, policy);
      const bool flagged = d.findings.size() == 1 && d.findings[0].metric == metric;
      o.require(flagged == (delta > 0) && d.findings.size() <= 1,
                std::string(bg::to_string(metric)) + (delta > 0 ? " not flagged at +1e-6" : " flagged at -1e-6"));
    }
  }
  return o;
}

Outcome bisection_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  auto spec = bg::spec_for_model(*bg::find_builtin_model("synth-conv"), "in-process");
  bg::RunConfig cfg;
  cfg.mode = bg::Mode::eval;
  cfg.device = bg::Device::gpu;
  cfg.batch_size = 64;
  cfg.repeats = 3;
  std::mt19937_64 rng(8);
  int conclusive = 0;
  for (int trial = 0; trial < 100 && o.pass; ++trial) {
    bg::SimulatedHistory h;
    h.n = std::uniform_int_distribution<std::int64_t>(1, 200)(rng);
    h.culprit = std::uniform_int_distribution<std::int64_t>(0, h.n - 1)(rng);
    h.step = 0.2;
    h.noise = 0.03;
    h.seed = rng();
    for (int k = std::uniform_int_distribution<int>(0, 3)(rng); k > 0 && h.n > 1; --k)
      h.unbuildable.insert(std::uniform_int_distribution<std::int64_t>(0, h.n - 2)(rng));
    bg::SimulatedProvider provider(h);

    bg::Commit base{"previous-nightly", h.start_timestamp - 1};
    auto base_set = bg::measure(spec, cfg, provider.runner_for(base, ""));
    bg::BisectPredicate pred{spec, cfg, bg::Metric::wall_time, base_set.summary.wall_time_us};

    // Linear scan with direct probes.
    std::optional<std::int64_t> expected;
    std::int64_t last_good = -1;
    const auto commits = h.commits();
    for (std::int64_t i = 0; i < h.n; ++i) {
      auto p = bg::probe_commit(commits[std::size_t(i)], provider, provider, pred, {});
      if (p.kind == bg::ProbeKind::good) last_good = i;
      if (p.kind == bg::ProbeKind::bad) {
        if (i - last_good == 1) expected = i;
        break;
      }
    }

    bg::BisectionSession s;
    s.commits = commits;
    s.baseline_commit = base;
    s.predicate = pred;
    auto r = bg::bisect(s, provider, provider, {});
    const std::string at = "trial " + std::to_string(trial) + " (n=" + std::to_string(h.n) + ")";
    if (expected) {
      o.require(r.culprit && r.culprit->id == commits[std::size_t(*expected)].id,
                at + ": culprit " + (r.culprit ? r.culprit->id : r.inconclusive_reason));
      o.require(*expected == *h.culprit, at + ": linear scan disagrees with the injected culprit");
      ++conclusive;
    } else {
      o.require(!r.culprit, at + ": expected inconclusive");
      o.require(h.unbuildable.count(*h.culprit - 1) || h.unbuildable.count(*h.culprit),
                at + ": inconclusive without an adjacent unbuildable commit");
    }
    std::int64_t unbuildable = 0;
    for (const auto& e : s.probe_log) unbuildable += e.outcome.kind == bg::ProbeKind::unbuildable;
    o.require(std::int64_t(s.probe_log.size()) <= bg::ceil_log2(h.n) + 2 + unbuildable,
              at + ": " + std::to_string(s.probe_log.size()) + " probes");
  }
  const double secs = seconds_since(t0);
  o.require(secs < 30.0, "took " + std::to_string(secs) + " s");
  if (o.pass)
    o.detail = "100 histories, " + std::to_string(conclusive) + " conclusive, " + bg::format_fixed(secs, 2) + " s";
  return o;
}

bg::ProcessResult cli(const std::vector<std::string>& args) {
  std::vector<std::string> argv = {BENCHGUARD_TEST_CLI_EXE};
  argv.insert(argv.end(), args.begin(), args.end());
  bg::ProcessOptions po;
  po.timeout = std::chrono::seconds(240);
  return bg::run_process(argv, po);
}

Outcome end_to_end_ci() {
  Outcome o;
  TempDir tmp;
  const fs::path registry = fs::path(BENCHGUARD_SOURCE_DIR) / "samples" / "registry";
  write(tmp.path() / "config.json", nlohmann::json{{"registry", registry.string()},
                                                   {"baseline", "state/baseline"},
                                                   {"output", "state/out"},
                                                   {"provider", {{"kind", "simulated"}, {"history", "h.json"}}},
                                                   {"repeats", 3},
                                                   {"timeout_s", 60}}
                                        .dump());
  auto nightly = [&](const std::string& history) {
    write(tmp.path() / "h.json", history);
    return cli({"ci-nightly", "--config", (tmp.path() / "config.json").string()});
  };
  bg::BaselineStore store(tmp.path() / "state" / "baseline");

  auto first = nightly(R"({"n": 10, "culprit": null, "noise": 0.03, "prefix": "mon"})");
  o.require(first.exit_code == 0, "first clean nightly exited " + std::to_string(first.exit_code) + ": " + first.err);
  auto clean = nightly(R"({"n": 15, "culprit": null, "noise": 0.03, "prefix": "tue", "start_timestamp": 1700100000})");
  o.require(clean.exit_code == 0, "clean nightly exited " + std::to_string(clean.exit_code) + ": " + clean.err);
  auto b = store.load();
  o.require(b && b->provenance.commit == "tue-0014", "baseline did not advance to tue-0014");
  o.require(store.history().size() == 2, "history has " + std::to_string(store.history().size()) + " baselines");

  auto regressed = nightly(R"({"n": 70, "culprit": 42, "step": 0.2, "noise": 0.03, "unbuildable": [35],
                              "prefix": "wed", "seed": 9, "start_timestamp": 1700200000})");
  o.require(regressed.exit_code == 3, "regressed nightly exited " + std::to_string(regressed.exit_code) + ": " +
                                          regressed.err);
  const auto issue_path = tmp.path() / "state" / "out" / "issue.json";
  if (fs::exists(issue_path)) {
    auto issue = nlohmann::json::parse(bg::read_file(issue_path));
    o.require(issue["culprit"] == "wed-0042", "issue culprit " + issue["culprit"].dump());
    for (const char* key : {"title", "body", "labels"}) o.require(issue.contains(key), std::string("issue lacks ") + key);
  } else {
    o.require(false, "no issue.json");
  }
  if (o.pass) o.detail = "clean 0/0, injected 3 naming wed-0042";
  return o;
}

Outcome matrix_totality() {
  Outcome o;
  const fs::path registry = fs::path(BENCHGUARD_SOURCE_DIR) / "samples" / "registry";
  auto specs = bg::load_registry(registry, BENCHGUARD_TEST_SYNTH_EXE);
  auto builtins = bg::list_builtin_workloads(BENCHGUARD_TEST_SYNTH_EXE);
  specs.insert(specs.end(), builtins.begin(), builtins.end());
  bg::RunConfig base;
  base.repeats = 3;
  std::size_t measured = 0, skipped = 0;
  for (const auto& spec : specs) {
    auto m = bg::run_matrix(spec, base, bg::subprocess_runner());
    o.require(m.cells.size() == 4, spec.name + ": " + std::to_string(m.cells.size()) + " cells");
    for (std::size_t i = 0; i < m.cells.size(); ++i) {
      const auto& c = m.cells[i];
      o.require(c.mode == bg::kMatrixCells[i].first && c.device == bg::kMatrixCells[i].second,
                spec.name + ": cell order");
      if (c.status == bg::CellStatus::measured) {
        o.require(c.measurement.has_value(), spec.name + ": measured cell without a measurement");
        ++measured;
      } else {
        o.require(!c.reason.empty(), spec.name + ": skipped cell without a reason");
        ++skipped;
      }
    }
  }
  if (o.pass)
    o.detail = std::to_string(specs.size()) + " workloads, " + std::to_string(measured) + " measured, " +
               std::to_string(skipped) + " skipped";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"decomposition matches per-microsecond oracle", decomposition_oracle},
      {"decomposition degenerate and worked cases", decomposition_degenerate},
      {"breakdown table fixture layout and row sum", table_fixture},
      {"median run selection", median_discipline},
      {"batch-size search on built-in models", batch_search},
      {"geomean and ratio algebra", geomean_algebra},
      {"detection boundary at 7%", detection_boundary},
      {"bisection against linear scan", bisection_oracle},
      {"end-to-end ci-nightly", end_to_end_ci},
      {"matrix totality", matrix_totality},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.pass;
    std::cout << "criterion " << i + 1 << ": " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first;
    if (!o.detail.empty()) std::cout << " (" << o.detail << ")";
    std::cout << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
