#pragma once

// Report serialization. JSON is canonical; Markdown and CSV are renderings
// of the same numbers with fixed formatting rules:
//
//   ratios and geomeans    3 decimals
//   percent changes        1 decimal, signed (U+2212 for minus)
//   breakdown percentages  1 decimal
//
// Every JSON document carries a "schema" string "benchguard.<kind>/<version>";
// docs/schemas.md describes each kind.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "benchguard/analytics.hpp"
#include "benchguard/bisect.hpp"
#include "benchguard/measurement.hpp"
#include "benchguard/regression.hpp"
#include "benchguard/trace.hpp"

namespace benchguard {

using ojson = nlohmann::ordered_json;

inline constexpr const char* kMeasurementsSchema = "benchguard.measurements/1";
inline constexpr const char* kMatrixSchema = "benchguard.matrix/1";
inline constexpr const char* kComparisonSchema = "benchguard.comparison/1";
inline constexpr const char* kPlatformSchema = "benchguard.platform/1";
inline constexpr const char* kBreakdownSchema = "benchguard.breakdown/1";
inline constexpr const char* kCiReportSchema = "benchguard.ci-report/1";

// ---------------------------------------------------------------------------
// Measurements

inline ojson to_json(const Decomposition& d) {
  ojson j;
  j["active_fraction"] = d.active_fraction;
  j["movement_fraction"] = d.movement_fraction;
  j["idle_fraction"] = d.idle_fraction;
  j["wall_time_us"] = d.wall_time_us;
  j["active_us"] = d.active_us;
  j["movement_us"] = d.movement_us;
  j["idle_us"] = d.idle_us;
  return j;
}

inline Decomposition decomposition_from_json(const nlohmann::json& j) {
  Decomposition d;
  d.active_fraction = j.at("active_fraction").get<double>();
  d.movement_fraction = j.at("movement_fraction").get<double>();
  d.idle_fraction = j.at("idle_fraction").get<double>();
  d.wall_time_us = j.value("wall_time_us", std::int64_t{0});
  d.active_us = j.value("active_us", std::int64_t{0});
  d.movement_us = j.value("movement_us", std::int64_t{0});
  d.idle_us = j.value("idle_us", std::int64_t{0});
  return d;
}

inline ojson to_json(const RunResult& r) {
  ojson j;
  j["exit_class"] = to_string(r.exit_class);
  if (r.ok()) j["metrics"] = to_json(r.metrics);
  if (r.trace_path) j["trace_path"] = r.trace_path->string();
  if (r.timed_out) j["timed_out"] = true;
  if (!r.diagnostic.empty()) j["diagnostic"] = r.diagnostic;
  return j;
}

inline RunResult run_result_from_json(const nlohmann::json& j) {
  RunResult r;
  r.exit_class = parse_exit_class(j.at("exit_class").get<std::string>());
  if (auto it = j.find("metrics"); it != j.end()) r.metrics = metrics_from_json(*it);
  if (auto it = j.find("trace_path"); it != j.end()) r.trace_path = it->get<std::string>();
  r.timed_out = j.value("timed_out", false);
  r.diagnostic = j.value("diagnostic", std::string{});
  return r;
}

inline ojson to_json(const MeasurementSet& s) {
  ojson j = to_json(s.key());
  j["domain"] = s.domain;
  j["batch_size"] = s.config.batch_size.value_or(0);
  j["repeats"] = s.config.repeats;
  j["reduction"] = to_string(s.config.reduction);
  j["iterations"] = s.config.iterations;
  j["precision"] = s.config.precision;
  j["degraded"] = s.degraded;
  j["selected_index"] = s.selected ? ojson(*s.selected) : ojson(nullptr);
  j["summary"] = to_json(s.summary);
  if (s.decomposition) j["decomposition"] = to_json(*s.decomposition);
  auto runs = ojson::array();
  for (const auto& r : s.runs) runs.push_back(to_json(r));
  j["runs"] = std::move(runs);
  return j;
}

inline MeasurementSet measurement_from_json(const nlohmann::json& j) {
  try {
    MeasurementSet s;
    auto key = cell_key_from_json(j);
    s.workload = key.workload;
    s.config.mode = key.mode;
    s.config.device = key.device;
    s.domain = j.value("domain", std::string("unspecified"));
    s.config.batch_size = j.at("batch_size").get<std::int64_t>();
    s.config.repeats = j.at("repeats").get<int>();
    s.config.reduction = parse_reduction(j.at("reduction").get<std::string>());
    s.config.iterations = j.value("iterations", std::int64_t{1});
    s.config.precision = j.value("precision", std::string("fp32"));
    s.degraded = j.value("degraded", false);
    if (auto it = j.find("selected_index"); it != j.end() && !it->is_null()) s.selected = it->get<std::size_t>();
    s.summary = metrics_from_json(j.at("summary"));
    if (auto it = j.find("decomposition"); it != j.end()) s.decomposition = decomposition_from_json(*it);
    for (const auto& r : j.value("runs", nlohmann::json::array())) s.runs.push_back(run_result_from_json(r));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("measurement: ") + e.what());
  }
}

inline ojson measurements_document(const std::vector<MeasurementSet>& sets) {
  ojson j;
  j["schema"] = kMeasurementsSchema;
  auto arr = ojson::array();
  for (const auto& s : sets) arr.push_back(to_json(s));
  j["measurements"] = std::move(arr);
  return j;
}

inline void write_text_file(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
  }
  std::filesystem::rename(tmp, p);
}

// A result directory holds measurements.json (the reduced sets, with their
// raw runs) and runs.jsonl (one line per raw run, append-only).
inline std::vector<MeasurementSet> load_result_dir(const std::filesystem::path& dir) {
  auto p = dir / "measurements.json";
  if (!std::filesystem::exists(p)) throw ValidationError("no measurements.json in " + dir.string());
  auto j = nlohmann::json::parse(read_file(p), nullptr, false);
  if (j.is_discarded()) throw ParseError(p.string() + ": invalid JSON");
  if (j.value("schema", std::string{}) != kMeasurementsSchema)
    throw ParseError(p.string() + ": expected schema " + kMeasurementsSchema);
  std::vector<MeasurementSet> out;
  for (const auto& m : j.at("measurements")) out.push_back(measurement_from_json(m));
  return out;
}

// Merges `sets` into the directory, replacing measurements of the same cell.
inline void save_to_result_dir(const std::filesystem::path& dir, const std::vector<MeasurementSet>& sets) {
  std::filesystem::create_directories(dir);
  std::map<CellKey, MeasurementSet> merged;
  if (std::filesystem::exists(dir / "measurements.json"))
    for (auto& s : load_result_dir(dir)) merged[s.key()] = std::move(s);
  for (const auto& s : sets) merged[s.key()] = s;
  std::vector<MeasurementSet> all;
  for (auto& [k, s] : merged) all.push_back(std::move(s));
  write_text_file(dir / "measurements.json", measurements_document(all).dump(2) + "\n");

  std::ofstream runs(dir / "runs.jsonl", std::ios::app | std::ios::binary);
  for (const auto& s : sets) {
    for (std::size_t i = 0; i < s.runs.size(); ++i) {
      ojson line = to_json(s.key());
      line["batch_size"] = s.config.batch_size.value_or(0);
      line["run_index"] = i;
      line["run"] = to_json(s.runs[i]);
      runs << line.dump() << "\n";
    }
  }
}

inline ojson to_json(const ConfigMatrix& m) {
  ojson j;
  j["schema"] = kMatrixSchema;
  j["workload"] = m.workload;
  auto cells = ojson::array();
  for (const auto& c : m.cells) {
    ojson cj;
    cj["mode"] = to_string(c.mode);
    cj["device"] = to_string(c.device);
    cj["status"] = to_string(c.status);
    if (!c.reason.empty()) cj["reason"] = c.reason;
    if (c.measurement) cj["measurement"] = to_json(*c.measurement);
    cells.push_back(std::move(cj));
  }
  j["cells"] = std::move(cells);
  return j;
}

inline std::string human_bytes(std::int64_t b) {
  const char* units[] = {"B", "KiB", "MiB", "GiB", "TiB"};
  double v = double(b);
  int u = 0;
  while (std::abs(v) >= 1024.0 && u < 4) {
    v /= 1024.0;
    ++u;
  }
  return format_fixed(v, u == 0 ? 0 : 1) + " " + units[u];
}

inline std::string render_measurements_markdown(const std::vector<MeasurementSet>& sets) {
  std::ostringstream md;
  md << "| Cell | Batch | Runs | Reduction | Wall time (us) | Peak CPU mem | Peak GPU mem | Post-run resident |\n"
     << "|---|---:|---:|---|---:|---:|---:|---:|\n";
  for (const auto& s : sets) {
    md << "| " << s.key().to_string() << " | " << s.config.batch_size.value_or(0) << " | " << s.ok_indices().size()
       << "/" << s.runs.size() << (s.degraded ? " (degraded)" : "") << " | " << to_string(s.config.reduction) << " | "
       << s.summary.wall_time_us << " | " << human_bytes(s.summary.peak_cpu_mem_bytes) << " | "
       << human_bytes(s.summary.peak_gpu_mem_bytes) << " | " << human_bytes(s.summary.post_run_resident_bytes)
       << " |\n";
  }
  return md.str();
}

inline std::string render_measurements_csv(const std::vector<MeasurementSet>& sets) {
  std::ostringstream csv;
  csv << "workload,mode,device,batch_size,repeats,reduction,wall_time_us,peak_cpu_mem_bytes,peak_gpu_mem_bytes,"
         "post_run_resident_bytes,active_fraction,movement_fraction,idle_fraction\n";
  for (const auto& s : sets) {
    csv << s.workload << "," << to_string(s.config.mode) << "," << to_string(s.config.device) << ","
        << s.config.batch_size.value_or(0) << "," << s.config.repeats << "," << to_string(s.config.reduction) << ","
        << s.summary.wall_time_us << "," << s.summary.peak_cpu_mem_bytes << "," << s.summary.peak_gpu_mem_bytes << ","
        << s.summary.post_run_resident_bytes;
    if (s.decomposition)
      csv << "," << format_fixed(s.decomposition->active_fraction, 6) << ","
          << format_fixed(s.decomposition->movement_fraction, 6) << ","
          << format_fixed(s.decomposition->idle_fraction, 6);
    else
      csv << ",,,";
    csv << "\n";
  }
  return csv.str();
}

// ---------------------------------------------------------------------------
// Comparisons

inline ojson to_json(const VariantComparison& c) {
  ojson j;
  j["schema"] = kComparisonSchema;
  j["baseline"] = c.baseline_label;
  j["candidate"] = c.candidate_label;
  j["orientation"] = "candidate / baseline; <1 means the candidate is lower";
  auto rows = ojson::array();
  for (const auto& r : c.rows) {
    ojson rj = to_json(r.cell);
    rj["wall_time_ratio"] = r.wall_time;
    rj["peak_cpu_mem_ratio"] = r.peak_cpu_mem;
    rj["peak_cpu_mem_change"] = format_percent_change(r.peak_cpu_mem);
    rj["peak_gpu_mem_ratio"] = r.peak_gpu_mem ? ojson(*r.peak_gpu_mem) : ojson(nullptr);
    rj["peak_gpu_mem_change"] = r.peak_gpu_mem ? ojson(format_percent_change(*r.peak_gpu_mem)) : ojson(nullptr);
    if (r.mean_speedup) rj["mean_speedup"] = *r.mean_speedup;
    rows.push_back(std::move(rj));
  }
  j["rows"] = std::move(rows);
  ojson g;
  g["wall_time_ratio"] = c.geomean_wall_time;
  g["speedup"] = 1.0 / c.geomean_wall_time;
  g["peak_cpu_mem_ratio"] = c.geomean_peak_cpu_mem;
  g["peak_cpu_mem_change"] = format_percent_change(c.geomean_peak_cpu_mem);
  g["peak_gpu_mem_ratio"] = c.geomean_peak_gpu_mem ? ojson(*c.geomean_peak_gpu_mem) : ojson(nullptr);
  g["peak_gpu_mem_change"] =
      c.geomean_peak_gpu_mem ? ojson(format_percent_change(*c.geomean_peak_gpu_mem)) : ojson(nullptr);
  j["geomean"] = std::move(g);
  auto keys = [](const std::vector<CellKey>& v) {
    auto a = ojson::array();
    for (const auto& k : v) a.push_back(k.to_string());
    return a;
  };
  j["only_in_baseline"] = keys(c.only_in_baseline);
  j["only_in_candidate"] = keys(c.only_in_candidate);
  return j;
}

inline std::string render_comparison_markdown(const VariantComparison& c) {
  std::ostringstream md;
  md << "## " << c.candidate_label << " vs " << c.baseline_label << "\n\n"
     << "Ratios are " << c.candidate_label << " / " << c.baseline_label << "; <1 means " << c.candidate_label
     << " is lower (faster, or less memory). Speedup = 1 / time ratio.\n\n"
     << "| Cell | Time ratio | Speedup | CPU mem ratio | CPU mem change | GPU mem ratio | GPU mem change |\n"
     << "|---|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& r : c.rows) {
    md << "| " << r.cell.to_string() << " | " << format_fixed(r.wall_time, 3) << " | "
       << format_fixed(1.0 / r.wall_time, 3) << "x | " << format_fixed(r.peak_cpu_mem, 3) << " | "
       << format_percent_change(r.peak_cpu_mem) << " | "
       << (r.peak_gpu_mem ? format_fixed(*r.peak_gpu_mem, 3) : "-") << " | "
       << (r.peak_gpu_mem ? format_percent_change(*r.peak_gpu_mem) : "-") << " |\n";
  }
  md << "| **geomean** | " << format_fixed(c.geomean_wall_time, 3) << " | " << format_fixed(1.0 / c.geomean_wall_time, 3)
     << "x | " << format_fixed(c.geomean_peak_cpu_mem, 3) << " | " << format_percent_change(c.geomean_peak_cpu_mem)
     << " | " << (c.geomean_peak_gpu_mem ? format_fixed(*c.geomean_peak_gpu_mem, 3) : "-") << " | "
     << (c.geomean_peak_gpu_mem ? format_percent_change(*c.geomean_peak_gpu_mem) : "-") << " |\n";
  if (!c.only_in_baseline.empty() || !c.only_in_candidate.empty()) {
    md << "\nNot compared (present on one side only):";
    for (const auto& k : c.only_in_baseline) md << " " << k.to_string() << " (" << c.baseline_label << ")";
    for (const auto& k : c.only_in_candidate) md << " " << k.to_string() << " (" << c.candidate_label << ")";
    md << "\n";
  }
  return md.str();
}

inline std::string render_comparison_csv(const VariantComparison& c) {
  std::ostringstream csv;
  csv << "workload,mode,device,wall_time_ratio,peak_cpu_mem_ratio,peak_gpu_mem_ratio\n";
  for (const auto& r : c.rows)
    csv << r.cell.workload << "," << to_string(r.cell.mode) << "," << to_string(r.cell.device) << ","
        << format_fixed(r.wall_time, 6) << "," << format_fixed(r.peak_cpu_mem, 6) << ","
        << (r.peak_gpu_mem ? format_fixed(*r.peak_gpu_mem, 6) : "") << "\n";
  return csv.str();
}

inline ojson to_json(const PlatformComparison& p) {
  ojson j;
  j["schema"] = kPlatformSchema;
  j["a"] = p.label_a;
  j["b"] = p.label_b;
  j["convention"] = p.convention();
  auto rows = ojson::array();
  for (const auto& r : p.rows) {
    ojson rj = to_json(r.cell);
    rj["ratio"] = r.ratio;
    rows.push_back(std::move(rj));
  }
  j["rows"] = std::move(rows);
  ojson g;
  for (const auto& [mode, v] : p.geomean_by_mode) g[std::string(to_string(mode))] = v;
  j["geomean_by_mode"] = std::move(g);
  return j;
}

inline std::string render_platform_markdown(const PlatformComparison& p) {
  std::ostringstream md;
  md << "## T_" << p.label_a << " / T_" << p.label_b << "\n\n" << p.convention() << ".\n\n"
     << "| Cell | Ratio | Better |\n|---|---:|---|\n";
  for (const auto& r : p.rows)
    md << "| " << r.cell.to_string() << " | " << format_fixed(r.ratio, 3) << " | "
       << (r.ratio < 1.0 ? p.label_a : r.ratio > 1.0 ? p.label_b : std::string("tie")) << " |\n";
  for (const auto& [mode, v] : p.geomean_by_mode)
    md << "| **geomean (" << to_string(mode) << ")** | " << format_fixed(v, 3) << " | |\n";
  return md.str();
}

// ---------------------------------------------------------------------------
// Breakdown

inline const char* kBreakdownFooter =
    "Domain rows are arithmetic means of per-workload fractions. Copies overlapped by compute count as GPU "
    "activeness, not data movement.";

inline ojson to_json(const BreakdownTable& t) {
  auto row_json = [](const BreakdownRow& r, const char* label_key) {
    ojson j;
    j[label_key] = r.domain;
    j["mode"] = to_string(r.mode);
    j["gpu_active_pct"] = r.active_pct;
    j["data_movement_pct"] = r.movement_pct;
    j["gpu_idle_pct"] = r.idle_pct;
    j["workloads"] = r.workloads;
    return j;
  };
  ojson j;
  j["schema"] = kBreakdownSchema;
  auto rows = ojson::array();
  for (const auto& r : t.rows) rows.push_back(row_json(r, "domain"));
  j["rows"] = std::move(rows);
  auto per = ojson::array();
  for (const auto& r : t.per_workload) per.push_back(row_json(r, "workload"));
  j["per_workload"] = std::move(per);
  j["note"] = kBreakdownFooter;
  return j;
}

// Domain rows with Train and Inference column groups.
inline std::string render_breakdown_markdown(const BreakdownTable& t) {
  std::vector<std::string> domains;
  std::map<std::pair<std::string, Mode>, const BreakdownRow*> by_key;
  for (const auto& r : t.rows) {
    if (std::find(domains.begin(), domains.end(), r.domain) == domains.end()) domains.push_back(r.domain);
    by_key[{r.domain, r.mode}] = &r;
  }
  std::ostringstream md;
  md << "| Task | Train GPU activeness | Train Data movement | Train GPU idleness "
        "| Inference GPU activeness | Inference Data movement | Inference GPU idleness |\n"
     << "|---|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& d : domains) {
    md << "| " << d << " |";
    for (auto mode : {Mode::train, Mode::eval}) {
      auto it = by_key.find({d, mode});
      if (it == by_key.end()) {
        md << " - | - | - |";
      } else {
        const auto& r = *it->second;
        md << " " << format_fixed(r.active_pct, 1) << " | " << format_fixed(r.movement_pct, 1) << " | "
           << format_fixed(r.idle_pct, 1) << " |";
      }
    }
    md << "\n";
  }
  md << "\n" << kBreakdownFooter << "\n";
  return md.str();
}

inline std::string render_breakdown_csv(const BreakdownTable& t) {
  std::ostringstream csv;
  csv << "kind,label,mode,gpu_active_pct,data_movement_pct,gpu_idle_pct\n";
  auto put = [&](const char* kind, const BreakdownRow& r) {
    csv << kind << "," << r.domain << "," << to_string(r.mode) << "," << format_fixed(r.active_pct, 1) << ","
        << format_fixed(r.movement_pct, 1) << "," << format_fixed(r.idle_pct, 1) << "\n";
  };
  for (const auto& r : t.rows) put("domain", r);
  for (const auto& r : t.per_workload) put("workload", r);
  return csv.str();
}

inline std::vector<BreakdownEntry> breakdown_entries(const std::vector<MeasurementSet>& sets) {
  std::vector<BreakdownEntry> out;
  for (const auto& s : sets)
    if (s.decomposition) out.push_back({s.workload, s.domain, s.config.mode, *s.decomposition});
  return out;
}

// ---------------------------------------------------------------------------
// Regression findings and bisection

inline std::string format_metric_value(Metric m, std::int64_t v) {
  return m == Metric::wall_time ? std::to_string(v) + " us" : human_bytes(v);
}

inline ojson to_json(const RegressionFinding& f) {
  ojson j = to_json(f.cell);
  j["metric"] = to_string(f.metric);
  j["baseline_value"] = f.baseline_value;
  j["observed_value"] = f.observed_value;
  j["ratio"] = f.ratio;
  j["baseline_provenance"] = to_json(f.baseline_provenance);
  j["culprit"] = f.culprit ? ojson(*f.culprit) : ojson(nullptr);
  return j;
}

inline ojson to_json(const DetectionResult& d) {
  ojson j;
  auto f = ojson::array();
  for (const auto& x : d.findings) f.push_back(to_json(x));
  j["findings"] = std::move(f);
  auto n = ojson::array();
  for (const auto& k : d.new_cells) n.push_back(k.to_string());
  j["new_cells"] = std::move(n);
  return j;
}

inline std::string render_findings_markdown(const DetectionResult& d, const RegressionPolicy& policy) {
  std::ostringstream md;
  md << "Thresholds: wall time +" << format_fixed(policy.time_threshold * 100, 1) << "%, memory +"
     << format_fixed(policy.mem_threshold * 100, 1) << "%, leak " << human_bytes(policy.leak_threshold_bytes)
     << " post-run growth; wall-time findings need a baseline of at least " << policy.min_abs_time_us << " us.\n\n";
  if (d.findings.empty()) {
    md << "No regressions.\n";
  } else {
    md << "| Cell | Metric | Baseline | Observed | Ratio | Culprit |\n|---|---|---:|---:|---:|---|\n";
    for (const auto& f : d.findings)
      md << "| " << f.cell.to_string() << " | " << to_string(f.metric) << " | "
         << format_metric_value(f.metric, f.baseline_value) << " | " << format_metric_value(f.metric, f.observed_value)
         << " | " << format_fixed(f.ratio, 3) << " | " << f.culprit.value_or("-") << " |\n";
  }
  if (!d.new_cells.empty()) {
    md << "\nNew cells (no baseline yet):";
    for (const auto& k : d.new_cells) md << " " << k.to_string();
    md << "\n";
  }
  return md.str();
}

inline ojson to_json(const BisectionSession& s) {
  ojson j;
  j["cell"] = s.predicate.cell().to_string();
  j["metric"] = to_string(s.predicate.metric);
  j["baseline_value"] = s.predicate.baseline_value;
  j["commits"] = s.commits.size();
  j["baseline_commit"] = s.baseline_commit ? ojson(s.baseline_commit->id) : ojson(nullptr);
  auto log = ojson::array();
  for (const auto& e : s.probe_log) {
    ojson p;
    p["commit"] = e.commit.id;
    p["index"] = e.index;
    p["outcome"] = to_string(e.outcome.kind);
    if (e.outcome.decisive()) {
      p["observed"] = e.outcome.observed;
      p["ratio"] = e.outcome.ratio;
    } else {
      p["reason"] = e.outcome.reason;
    }
    log.push_back(std::move(p));
  }
  j["probe_log"] = std::move(log);
  j["culprit"] = s.culprit ? ojson(s.culprit->id) : ojson(nullptr);
  if (!s.culprit) j["inconclusive"] = s.inconclusive_reason;
  return j;
}

inline std::string render_bisection_markdown(const BisectionSession& s) {
  std::ostringstream md;
  md << "### Bisection: " << s.predicate.cell().to_string() << " " << to_string(s.predicate.metric) << "\n\n"
     << "Baseline value " << format_metric_value(s.predicate.metric, s.predicate.baseline_value) << ", "
     << s.commits.size() << " commits";
  if (s.baseline_commit) md << " after " << s.baseline_commit->id;
  md << ".\n\n| # | Commit | Outcome | Observed | Ratio |\n|---:|---|---|---:|---:|\n";
  for (std::size_t i = 0; i < s.probe_log.size(); ++i) {
    const auto& e = s.probe_log[i];
    md << "| " << i + 1 << " | " << e.commit.id << " | " << to_string(e.outcome.kind) << " | ";
    if (e.outcome.decisive())
      md << format_metric_value(s.predicate.metric, e.outcome.observed) << " | " << format_fixed(e.outcome.ratio, 3);
    else
      md << e.outcome.reason << " | -";
    md << " |\n";
  }
  if (s.culprit)
    md << "\nCulprit: **" << s.culprit->id << "**\n";
  else
    md << "\nInconclusive: " << s.inconclusive_reason << "\n";
  return md.str();
}

}  // namespace benchguard
