// benchguard: benchmark measurement, analysis and nightly regression CI.
//
// Exit codes: 0 clean, 2 validation error, 3 findings, 4 webhook failure,
// 5 measurement failure, 1 anything else.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "benchguard/ci.hpp"

namespace bg = benchguard;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string registry;
  std::string workload;
  std::string mode = "eval";
  std::string device = "cpu";
  std::string bs = "auto";
  int repeats = 10;
  std::string reduction = "median_run";
  std::string out;
  bool json = false;
  bool csv = false;
  std::int64_t timeout_s = 600;
};

std::optional<bg::CliConfig> maybe_config(const Common& c) {
  if (c.config.empty()) return std::nullopt;
  auto cfg = bg::load_cli_config(c.config);
  return cfg;
}

std::vector<bg::WorkloadSpec> workloads(const Common& c) {
  if (!c.registry.empty()) return bg::load_registry(c.registry, bg::default_synth_executable());
  if (auto cfg = maybe_config(c)) return bg::configured_workloads(*cfg);
  return bg::list_builtin_workloads();
}

bg::WorkloadSpec find_workload(const Common& c) {
  if (c.workload.empty()) throw bg::ValidationError("--workload is required");
  for (auto& s : workloads(c))
    if (s.name == c.workload) return s;
  throw bg::ValidationError("unknown workload '" + c.workload + "'");
}

bg::Runner make_runner(const Common& c) {
  bg::InvokeOptions opts;
  opts.timeout = std::chrono::seconds(c.timeout_s);
  return bg::subprocess_runner(opts);
}

bg::RunConfig run_config(const Common& c) {
  bg::RunConfig rc;
  rc.mode = bg::parse_mode(c.mode);
  rc.device = bg::parse_device(c.device);
  rc.repeats = c.repeats;
  rc.reduction = bg::parse_reduction(c.reduction);
  if (c.bs != "auto") rc.batch_size = bg::detail::parse_int(c.bs, "--bs");
  rc.validate();
  return rc;
}

std::optional<bg::BatchSizeCache> batch_cache(const Common& c) {
  if (auto cfg = maybe_config(c)) return bg::BatchSizeCache(cfg->batch_cache_dir());
  return std::nullopt;
}

fs::path trace_dir(const Common& c) {
  return c.out.empty() ? fs::temp_directory_path() / ("benchguard-traces-" + std::to_string(::getpid()))
                       : fs::path(c.out) / "traces";
}

void print(const bg::ojson& j) { std::cout << j.dump(2) << "\n"; }

int cmd_run(const Common& c) {
  auto spec = find_workload(c);
  auto rc = run_config(c);
  auto runner = make_runner(c);
  if (!rc.batch_size) {
    if (rc.mode == bg::Mode::train) {
      rc.batch_size = spec.default_train_batch_size;
    } else {
      auto cache = batch_cache(c);
      if (auto hit = cache ? cache->get(spec.name, rc.device) : std::nullopt) {
        rc.batch_size = *hit;
      } else {
        bg::SearchOptions so;
        so.trace_dir = trace_dir(c) / "search";
        rc.batch_size = bg::search_batch_size(spec, rc.mode, rc.device, runner, so).batch_size;
        if (cache) cache->put(spec.name, rc.device, *rc.batch_size);
      }
    }
  }
  bg::MeasureOptions mo;
  mo.trace_dir = trace_dir(c);
  auto set = bg::measure(spec, rc, runner, mo);
  if (!c.out.empty()) bg::save_to_result_dir(c.out, {set});
  if (c.json)
    print(bg::to_json(set));
  else if (c.csv)
    std::cout << bg::render_measurements_csv({set});
  else
    std::cout << bg::render_measurements_markdown({set});
  return bg::kExitClean;
}

int cmd_matrix(const Common& c) {
  std::vector<bg::WorkloadSpec> specs;
  if (c.workload.empty())
    specs = workloads(c);
  else
    specs = {find_workload(c)};
  bg::RunConfig base;
  base.repeats = c.repeats;
  base.reduction = bg::parse_reduction(c.reduction);
  if (c.bs != "auto") base.batch_size = bg::detail::parse_int(c.bs, "--bs");
  base.validate();

  auto cache = batch_cache(c);
  bg::MatrixOptions mo;
  if (auto cfg = maybe_config(c)) mo.available_devices = cfg->devices;
  mo.batch_cache = cache ? &*cache : nullptr;
  mo.measure.trace_dir = trace_dir(c);
  mo.search.trace_dir = trace_dir(c) / "search";

  auto runner = make_runner(c);
  auto all = bg::ojson::array();
  std::vector<bg::MeasurementSet> measured;
  std::size_t failed = 0;
  for (const auto& spec : specs) {
    auto m = bg::run_matrix(spec, base, runner, mo);
    for (const auto& cell : m.cells) {
      if (cell.measurement) measured.push_back(*cell.measurement);
      if (cell.measurement_failed()) ++failed;
      if (!c.json)
        std::cout << m.workload << "\t" << bg::to_string(cell.mode) << "\t" << bg::to_string(cell.device) << "\t"
                  << bg::to_string(cell.status) << "\t"
                  << (cell.measurement ? std::to_string(cell.measurement->summary.wall_time_us) + " us" : cell.reason)
                  << "\n";
    }
    all.push_back(bg::to_json(m));
  }
  if (!c.out.empty()) {
    bg::save_to_result_dir(c.out, measured);
    bg::write_text_file(fs::path(c.out) / "matrix.json", all.dump(2) + "\n");
  }
  if (c.json) print(all);
  if (measured.empty() && failed > 0) return bg::kExitMeasurement;
  return bg::kExitClean;
}

int cmd_bsearch(const Common& c, std::int64_t cap) {
  auto spec = find_workload(c);
  auto mode = bg::parse_mode(c.mode);
  auto device = bg::parse_device(c.device);
  bg::SearchOptions so;
  so.cap = cap;
  so.trace_dir = trace_dir(c) / "search";
  auto r = bg::search_batch_size(spec, mode, device, make_runner(c), so);
  if (auto cache = batch_cache(c); cache && mode == bg::Mode::eval) cache->put(spec.name, device, r.batch_size);
  if (c.json) {
    bg::ojson j;
    j["workload"] = spec.name;
    j["mode"] = bg::to_string(mode);
    j["device"] = bg::to_string(device);
    j["batch_size"] = r.batch_size;
    j["criterion"] = r.criterion;
    auto probes = bg::ojson::array();
    for (const auto& p : r.probes) {
      bg::ojson pj;
      pj["batch_size"] = p.batch_size;
      pj["exit_class"] = bg::to_string(p.exit_class);
      if (p.active_fraction) pj["active_fraction"] = *p.active_fraction;
      if (p.exit_class == bg::ExitClass::ok) pj["throughput"] = p.throughput;
      probes.push_back(std::move(pj));
    }
    j["probes"] = std::move(probes);
    print(j);
  } else {
    for (const auto& p : r.probes) {
      std::cout << "bs " << p.batch_size << "\t" << bg::to_string(p.exit_class);
      if (p.active_fraction) std::cout << "\tactive " << bg::format_fixed(*p.active_fraction, 4);
      if (p.exit_class == bg::ExitClass::ok) std::cout << "\t" << bg::format_fixed(p.throughput, 1) << " samples/s";
      std::cout << "\n";
    }
    std::cout << "selected batch size " << r.batch_size << " (by " << r.criterion << ")\n";
  }
  return bg::kExitClean;
}

int cmd_decompose(const Common& c, const std::string& trace, std::int64_t wall) {
  auto events = bg::parse_trace_file(trace);
  if (wall <= 0)
    for (const auto& e : events) wall = std::max(wall, e.end_us());
  auto d = bg::decompose(events, wall);
  if (c.json) {
    print(bg::to_json(d));
  } else {
    std::cout << "GPU activeness   " << bg::format_fixed(d.active_fraction * 100, 1) << "%  (" << d.active_us
              << " us)\nData movement    " << bg::format_fixed(d.movement_fraction * 100, 1) << "%  (" << d.movement_us
              << " us)\nGPU idleness     " << bg::format_fixed(d.idle_fraction * 100, 1) << "%  (" << d.idle_us
              << " us)\nwall time        " << d.wall_time_us << " us\n";
  }
  return bg::kExitClean;
}

int cmd_compare(const Common& c, const std::vector<std::string>& dirs, const std::vector<std::string>& labels,
                bool platform) {
  if (dirs.size() != 2) throw bg::ValidationError("compare needs two result directories");
  auto a = bg::load_result_dir(dirs[0]);
  auto b = bg::load_result_dir(dirs[1]);
  std::string la = labels.size() > 0 ? labels[0] : fs::path(dirs[0]).filename().string();
  std::string lb = labels.size() > 1 ? labels[1] : fs::path(dirs[1]).filename().string();
  std::string md, csv;
  bg::ojson j;
  if (platform) {
    auto p = bg::compare_platforms(a, b, la, lb);
    j = bg::to_json(p);
    md = bg::render_platform_markdown(p);
  } else {
    auto v = bg::compare_variants(a, b, la, lb);
    j = bg::to_json(v);
    md = bg::render_comparison_markdown(v);
    csv = bg::render_comparison_csv(v);
  }
  if (!c.out.empty()) {
    bg::write_text_file(fs::path(c.out) / "comparison.json", j.dump(2) + "\n");
    bg::write_text_file(fs::path(c.out) / "comparison.md", md);
    if (!csv.empty()) bg::write_text_file(fs::path(c.out) / "comparison.csv", csv);
  }
  if (c.json)
    print(j);
  else if (c.csv && !csv.empty())
    std::cout << csv;
  else
    std::cout << md;
  return bg::kExitClean;
}

bg::RegressionPolicy policy_for(const Common& c, std::optional<double> threshold) {
  bg::RegressionPolicy p;
  if (auto cfg = maybe_config(c)) p = cfg->policy;
  if (threshold) p.time_threshold = p.mem_threshold = *threshold;
  p.validate();
  return p;
}

int cmd_detect(const Common& c, const std::string& results, std::string baseline_dir, std::optional<double> threshold,
               bool update, const std::string& commit) {
  if (baseline_dir.empty())
    if (auto cfg = maybe_config(c)) baseline_dir = cfg->baseline.string();
  if (baseline_dir.empty()) throw bg::ValidationError("--baseline is required");
  auto observed = bg::load_result_dir(results);
  auto policy = policy_for(c, threshold);
  bg::BaselineStore store(baseline_dir);

  std::optional<bg::StoreLock> lock;
  if (update) {
    fs::create_directories(store.dir());
    lock.emplace(store.dir() / ".lock");
  }
  auto prior = store.load();
  auto detection = bg::detect_regressions(prior.value_or(bg::Baseline{}), observed, policy);
  if (update) {
    if (commit.empty()) throw bg::ValidationError("--update needs --commit");
    store.save(bg::update_baseline(prior, observed, detection, {commit, std::int64_t(std::time(nullptr))}));
  }
  if (c.json)
    print(bg::to_json(detection));
  else
    std::cout << bg::render_findings_markdown(detection, policy);
  return detection.clean() ? bg::kExitClean : bg::kExitFindings;
}

struct BisectArgs {
  std::string commits;
  std::string history;
  std::string metric = "wall_time";
  std::string baseline_commit;
  std::int64_t baseline_value = 0;
  std::string baseline_dir;
  std::optional<double> threshold;
};

int cmd_bisect(const Common& c, const BisectArgs& a) {
  auto spec = find_workload(c);
  auto rc = run_config(c);
  if (!rc.batch_size) {
    if (rc.mode == bg::Mode::train) {
      rc.batch_size = spec.default_train_batch_size;
    } else if (auto cache = batch_cache(c); cache && cache->get(spec.name, rc.device)) {
      rc.batch_size = cache->get(spec.name, rc.device);
    } else {
      throw bg::ValidationError("bisect needs --bs N for eval cells without a cached batch size");
    }
  }
  auto policy = policy_for(c, a.threshold);

  bg::CliConfig cfg;
  if (auto loaded = maybe_config(c)) cfg = *loaded;
  if (!a.history.empty()) cfg.provider = bg::ProviderConfig{bg::ProviderKind::simulated, a.history, {}, {}};
  if (!c.registry.empty()) cfg.registry = c.registry;
  cfg.timeout = std::chrono::seconds(c.timeout_s);
  if (!cfg.provider) throw bg::ValidationError("bisect needs --history or a config with a provider");

  std::vector<bg::Commit> commits =
      bg::nightly_commits(cfg, a.commits.empty() ? std::nullopt : std::optional<fs::path>(a.commits));
  auto providers = bg::make_providers(cfg);

  bg::BisectionSession session;
  session.commits = commits;
  session.predicate.spec = spec;
  session.predicate.config = rc;
  session.predicate.metric = bg::parse_metric(a.metric);
  session.predicate.baseline_value = a.baseline_value;

  std::optional<bg::Baseline> stored;
  if (!a.baseline_dir.empty()) stored = bg::BaselineStore(a.baseline_dir).load();
  if (session.predicate.baseline_value <= 0 && stored) {
    auto it = stored->cells.find(session.predicate.cell());
    if (it == stored->cells.end()) throw bg::ValidationError("cell not in baseline: " + session.predicate.cell().to_string());
    session.predicate.baseline_value = bg::metric_value(it->second.metrics, session.predicate.metric);
  }
  if (!a.baseline_commit.empty())
    session.baseline_commit = bg::Commit{a.baseline_commit, 0};
  else if (stored)
    session.baseline_commit = bg::Commit{stored->provenance.commit, stored->provenance.timestamp};

  // Without a reference value, measure the baseline commit to obtain one.
  if (session.predicate.baseline_value <= 0) {
    if (!session.baseline_commit) throw bg::ValidationError("bisect needs --baseline-value, --baseline or --good");
    auto built = providers.build->build(*session.baseline_commit);
    if (!built.artifact) throw bg::MeasurementError("baseline commit is unbuildable: " + built.reason);
    auto set = bg::measure(spec, rc, providers.measure->runner_for(*session.baseline_commit, *built.artifact));
    session.predicate.baseline_value = bg::metric_value(set.summary, session.predicate.metric);
  }

  auto r = bg::bisect(session, *providers.build, *providers.measure, policy);
  if (!c.out.empty()) {
    bg::write_text_file(fs::path(c.out) / "bisect.json", bg::to_json(session).dump(2) + "\n");
    bg::write_text_file(fs::path(c.out) / "bisect.md", bg::render_bisection_markdown(session));
  }
  if (c.json)
    print(bg::to_json(session));
  else
    std::cout << bg::render_bisection_markdown(session);
  return r.culprit ? bg::kExitFindings : bg::kExitClean;
}

int cmd_ci_nightly(const Common& c, const std::string& commits, const std::string& history, const std::string& baseline,
                   const std::string& webhook_url) {
  if (c.config.empty()) throw bg::ValidationError("ci-nightly needs --config");
  auto cfg = bg::load_cli_config(c.config);
  if (!baseline.empty()) cfg.baseline = baseline;
  if (!c.out.empty()) cfg.output = c.out;
  if (!history.empty()) cfg.provider = bg::ProviderConfig{bg::ProviderKind::simulated, history, {}, {}};
  if (!webhook_url.empty()) {
    if (!cfg.webhook) cfg.webhook = bg::WebhookConfig{};
    cfg.webhook->url = webhook_url;
  }
  cfg.validate();
  bg::NightlyInputs in;
  in.commits = bg::nightly_commits(cfg, commits.empty() ? std::nullopt : std::optional<fs::path>(commits));
  auto o = bg::run_ci_nightly(cfg, in, bg::configured_workloads(cfg));
  if (c.json) {
    print(bg::nightly_report_json(o, cfg));
  } else {
    std::cout << "nightly " << o.nightly.id << ": " << o.measured.size() << " cells measured, "
              << o.detection.findings.size() << " findings\n";
    for (const auto& f : o.detection.findings)
      std::cout << "  " << f.cell.to_string() << " " << bg::to_string(f.metric) << " x" << bg::format_fixed(f.ratio, 3)
                << " culprit " << f.culprit.value_or("unknown") << "\n";
    if (!o.error.empty()) std::cerr << "error: " << o.error << "\n";
    std::cout << "reports in " << cfg.output.string() << "\n";
  }
  return o.exit_code;
}

int cmd_report(const Common& c, const std::string& dir) {
  auto sets = bg::load_result_dir(dir);
  auto entries = bg::breakdown_entries(sets);
  std::optional<bg::BreakdownTable> table;
  if (!entries.empty()) table = bg::breakdown_report(entries);
  if (c.json) {
    bg::ojson j;
    j["measurements"] = bg::measurements_document(sets);
    j["breakdown"] = table ? bg::to_json(*table) : bg::ojson(nullptr);
    print(j);
    return bg::kExitClean;
  }
  if (c.csv) {
    std::cout << bg::render_measurements_csv(sets);
    return bg::kExitClean;
  }
  std::cout << "# Benchmark report\n\n## Measurements\n\n" << bg::render_measurements_markdown(sets);
  if (table) std::cout << "\n## GPU time breakdown\n\n" << bg::render_breakdown_markdown(*table);
  return bg::kExitClean;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"benchguard: benchmark measurement and performance regression CI"};
  app.require_subcommand(1);
  Common c;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config, "CI config file (JSON)");
    sub->add_option("--registry", c.registry, "workload registry directory");
    sub->add_option("--out", c.out, "output directory");
    sub->add_flag("--json", c.json, "print JSON");
    sub->add_option("--timeout", c.timeout_s, "per-run timeout in seconds");
  };
  auto add_cell = [&](CLI::App* sub) {
    sub->add_option("--workload", c.workload);
    sub->add_option("--mode", c.mode, "train|eval");
    sub->add_option("--device", c.device, "cpu|gpu");
  };
  auto add_repeats = [&](CLI::App* sub) {
    sub->add_option("--bs", c.bs, "batch size N or auto");
    sub->add_option("--repeats", c.repeats);
    sub->add_option("--reduction", c.reduction, "median_run|arithmetic_mean");
  };

  auto* run = app.add_subcommand("run", "measure one cell");
  add_common(run);
  add_cell(run);
  add_repeats(run);
  run->add_flag("--csv", c.csv);

  auto* matrix = app.add_subcommand("matrix", "measure the four-configuration matrix");
  add_common(matrix);
  matrix->add_option("--workload", c.workload, "one workload (default: all registered)");
  add_repeats(matrix);

  std::int64_t cap = bg::kDefaultBatchCap;
  auto* bsearch = app.add_subcommand("bsearch", "batch-size doubling search");
  add_common(bsearch);
  add_cell(bsearch);
  bsearch->add_option("--cap", cap, "largest batch size to probe");

  std::string trace_file;
  std::int64_t wall = 0;
  auto* decompose = app.add_subcommand("decompose", "split a device trace into active/movement/idle");
  decompose->add_option("trace", trace_file, "Chrome trace JSON")->required();
  decompose->add_option("--wall-time-us", wall, "wall time (default: end of the last event)");
  decompose->add_flag("--json", c.json);

  std::vector<std::string> dirs, labels;
  bool platform = false;
  auto* compare = app.add_subcommand("compare", "compare two result directories");
  add_common(compare);
  compare->add_option("dirs", dirs, "baseline and candidate result directories")->expected(2)->required();
  compare->add_option("--labels", labels, "labels for the two sides")->expected(2);
  compare->add_flag("--platform", platform, "report T_a / T_b platform ratios");
  compare->add_flag("--csv", c.csv);

  std::string results, baseline, commit;
  std::optional<double> threshold;
  bool update = false;
  auto* detect = app.add_subcommand("detect", "check results against the baseline store");
  add_common(detect);
  detect->add_option("results", results, "result directory")->required();
  detect->add_option("--baseline", baseline, "baseline store directory");
  detect->add_option("--threshold", threshold, "relative threshold for every metric");
  detect->add_flag("--update", update, "advance the baseline after detection");
  detect->add_option("--commit", commit, "provenance commit for --update");

  BisectArgs ba;
  auto* bis = app.add_subcommand("bisect", "find the first commit that regresses a cell");
  add_common(bis);
  add_cell(bis);
  add_repeats(bis);
  bis->add_option("--commits", ba.commits, "commit list file");
  bis->add_option("--history", ba.history, "simulated history JSON");
  bis->add_option("--metric", ba.metric, "wall_time|peak_cpu_mem|peak_gpu_mem|leak");
  bis->add_option("--baseline", ba.baseline_dir, "baseline store providing the reference value");
  bis->add_option("--baseline-value", ba.baseline_value, "reference metric value");
  bis->add_option("--good", ba.baseline_commit, "known-good commit before the range");
  bis->add_option("--threshold", ba.threshold);

  std::string webhook_url;
  auto* ci = app.add_subcommand("ci-nightly", "measure, detect, bisect, update the baseline, file an issue");
  add_common(ci);
  ci->add_option("--commits", ba.commits, "the day's commits; the last is the nightly");
  ci->add_option("--history", ba.history, "simulated history JSON (overrides the provider)");
  ci->add_option("--baseline", baseline, "baseline store directory (overrides the config)");
  ci->add_option("--webhook-url", webhook_url, "issue webhook (overrides the config)");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "render a result directory");
  report->add_option("dir", report_dir)->required();
  report->add_flag("--json", c.json);
  report->add_flag("--csv", c.csv);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(c);
    if (*matrix) return cmd_matrix(c);
    if (*bsearch) return cmd_bsearch(c, cap);
    if (*decompose) return cmd_decompose(c, trace_file, wall);
    if (*compare) return cmd_compare(c, dirs, labels, platform);
    if (*detect) return cmd_detect(c, results, baseline, threshold, update, commit);
    if (*bis) return cmd_bisect(c, ba);
    if (*ci) return cmd_ci_nightly(c, ba.commits, ba.history, baseline, webhook_url);
    if (*report) return cmd_report(c, report_dir);
  } catch (const bg::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bg::kExitValidation;
  } catch (const bg::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bg::kExitValidation;
  } catch (const bg::ComparisonError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bg::kExitValidation;
  } catch (const bg::OomError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bg::kExitMeasurement;
  } catch (const bg::MeasurementError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bg::kExitMeasurement;
  } catch (const bg::SearchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bg::kExitMeasurement;
  } catch (const bg::LaunchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bg::kExitMeasurement;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
