#pragma once

// Comparison arithmetic over measurements.
//
// Ratios are always stored raw in candidate/baseline (or A/B) orientation;
// a ratio below 1 means the candidate (or A) took less. Time and memory
// ratios aggregate by geometric mean, breakdown fractions by arithmetic mean.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "benchguard/errors.hpp"
#include "benchguard/measurement.hpp"
#include "benchguard/trace.hpp"

namespace benchguard {

inline double geomean(std::span<const double> values) {
  if (values.empty()) throw ValidationError("geomean of an empty list");
  double log_sum = 0.0;
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("geomean needs finite positive values");
    log_sum += std::log(v);
  }
  return std::exp(log_sum / double(values.size()));
}

inline double geomean(const std::vector<double>& values) { return geomean(std::span<const double>(values)); }

inline double speedup_ratio(double t_a, double t_b) {
  if (!(t_b > 0.0)) throw ValidationError("speedup_ratio: denominator must be > 0");
  if (!(t_a > 0.0)) throw ValidationError("speedup_ratio: numerator must be > 0");
  return t_a / t_b;
}

// "-71.2%" style change for a candidate/baseline ratio, using U+2212 for the
// minus sign.
inline std::string format_percent_change(double ratio) {
  double pct = std::round((ratio - 1.0) * 1000.0) / 10.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", std::abs(pct));
  if (pct < 0) return "−" + std::string(buf);
  if (pct > 0) return "+" + std::string(buf);
  return buf;
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s == "-0.0" || s == "-0.00" || s == "-0.000" || s == "-0.0000") s.erase(0, 1);
  return s;
}

// ---------------------------------------------------------------------------
// Variant comparison

struct RatioRow {
  CellKey cell;
  double wall_time = 1.0;
  double peak_cpu_mem = 1.0;
  std::optional<double> peak_gpu_mem;  // absent when both sides report zero
  std::optional<double> mean_speedup;  // baseline/candidate, mean-mode sets only
};

struct VariantComparison {
  std::string baseline_label;
  std::string candidate_label;
  std::vector<RatioRow> rows;
  double geomean_wall_time = 1.0;
  double geomean_peak_cpu_mem = 1.0;
  std::optional<double> geomean_peak_gpu_mem;
  std::vector<CellKey> only_in_baseline;
  std::vector<CellKey> only_in_candidate;
};

// Arithmetic mean of per-run speedups baseline_i / candidate_i over the
// paired successful runs.
inline std::optional<double> mean_speedup(const MeasurementSet& baseline, const MeasurementSet& candidate) {
  auto b = baseline.ok_indices();
  auto c = candidate.ok_indices();
  auto n = std::min(b.size(), c.size());
  if (n == 0) return std::nullopt;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    sum += double(baseline.runs[b[i]].metrics.wall_time_us) / double(candidate.runs[c[i]].metrics.wall_time_us);
  return sum / double(n);
}

namespace detail {

inline std::map<CellKey, const MeasurementSet*> index_sets(const std::vector<MeasurementSet>& sets,
                                                           const char* side) {
  std::map<CellKey, const MeasurementSet*> m;
  for (const auto& s : sets)
    if (!m.emplace(s.key(), &s).second)
      throw ValidationError(std::string(side) + " has two measurements for " + s.key().to_string());
  return m;
}

// Ratio of two non-negative integers; nullopt when both are zero, error when
// only the denominator is.
inline std::optional<double> metric_ratio(std::int64_t num, std::int64_t den, const std::string& what) {
  if (num == 0 && den == 0) return std::nullopt;
  if (den == 0 || num == 0) throw ComparisonError(what + ": one side reports zero");
  return double(num) / double(den);
}

}  // namespace detail

inline VariantComparison compare_variants(const std::vector<MeasurementSet>& baseline,
                                          const std::vector<MeasurementSet>& candidate,
                                          std::string baseline_label = "baseline",
                                          std::string candidate_label = "candidate") {
  if (baseline.empty() || candidate.empty()) throw ValidationError("compare_variants: both sides must be non-empty");
  auto b = detail::index_sets(baseline, "baseline");
  auto c = detail::index_sets(candidate, "candidate");

  VariantComparison out;
  out.baseline_label = std::move(baseline_label);
  out.candidate_label = std::move(candidate_label);
  std::vector<double> wall, cpu, gpu;
  for (const auto& [key, bs] : b) {
    auto it = c.find(key);
    if (it == c.end()) {
      out.only_in_baseline.push_back(key);
      continue;
    }
    const auto& cs = *it->second;
    RatioRow row;
    row.cell = key;
    row.wall_time = speedup_ratio(double(cs.summary.wall_time_us), double(bs->summary.wall_time_us));
    row.peak_cpu_mem = detail::metric_ratio(cs.summary.peak_cpu_mem_bytes, bs->summary.peak_cpu_mem_bytes,
                                            key.to_string() + " peak_cpu_mem")
                           .value_or(1.0);
    row.peak_gpu_mem = detail::metric_ratio(cs.summary.peak_gpu_mem_bytes, bs->summary.peak_gpu_mem_bytes,
                                            key.to_string() + " peak_gpu_mem");
    if (bs->config.reduction == Reduction::arithmetic_mean && cs.config.reduction == Reduction::arithmetic_mean)
      row.mean_speedup = mean_speedup(*bs, cs);
    wall.push_back(row.wall_time);
    cpu.push_back(row.peak_cpu_mem);
    if (row.peak_gpu_mem) gpu.push_back(*row.peak_gpu_mem);
    out.rows.push_back(row);
  }
  for (const auto& [key, cs] : c)
    if (!b.count(key)) out.only_in_candidate.push_back(key);
  if (out.rows.empty()) throw ComparisonError("no common workloads");

  out.geomean_wall_time = geomean(wall);
  out.geomean_peak_cpu_mem = geomean(cpu);
  if (!gpu.empty()) out.geomean_peak_gpu_mem = geomean(gpu);
  return out;
}

// ---------------------------------------------------------------------------
// Platform comparison

struct PlatformRow {
  CellKey cell;
  double ratio = 1.0;  // T_A / T_B
};

struct PlatformComparison {
  std::string label_a;
  std::string label_b;
  std::vector<PlatformRow> rows;
  std::map<Mode, double> geomean_by_mode;

  std::string convention() const {
    return "ratio = T_" + label_a + " / T_" + label_b + "; <1 means " + label_a + " performs better, >1 means " +
           label_b + " performs better";
  }
};

inline PlatformComparison compare_platforms(const std::vector<MeasurementSet>& a, const std::vector<MeasurementSet>& b,
                                            std::string label_a, std::string label_b) {
  if (a.empty() || b.empty()) throw ValidationError("compare_platforms: both sides must be non-empty");
  auto ia = detail::index_sets(a, label_a.c_str());
  auto ib = detail::index_sets(b, label_b.c_str());
  PlatformComparison out;
  out.label_a = std::move(label_a);
  out.label_b = std::move(label_b);
  std::map<Mode, std::vector<double>> by_mode;
  for (const auto& [key, sa] : ia) {
    auto it = ib.find(key);
    if (it == ib.end()) continue;
    PlatformRow row{key, speedup_ratio(double(sa->summary.wall_time_us), double(it->second->summary.wall_time_us))};
    by_mode[key.mode].push_back(row.ratio);
    out.rows.push_back(row);
  }
  if (out.rows.empty()) throw ComparisonError("no common workloads");
  for (const auto& [mode, ratios] : by_mode) out.geomean_by_mode[mode] = geomean(ratios);
  return out;
}

// ---------------------------------------------------------------------------
// Breakdown tables

struct BreakdownEntry {
  std::string workload;
  std::string domain;
  Mode mode = Mode::eval;
  Decomposition decomposition;
};

struct BreakdownRow {
  std::string domain;  // or workload name for per-workload rows
  Mode mode = Mode::eval;
  double active_pct = 0.0;
  double movement_pct = 0.0;
  double idle_pct = 100.0;
  std::size_t workloads = 1;

  double sum() const { return active_pct + movement_pct + idle_pct; }
};

struct BreakdownTable {
  std::vector<BreakdownRow> rows;          // one per (domain, mode), sorted
  std::vector<BreakdownRow> per_workload;  // stacked-bar rows, input order
};

inline double round_to_tenth(double v) { return std::round(v * 10.0) / 10.0; }

inline BreakdownRow make_breakdown_row(std::string label, Mode mode, double active, double movement, double idle,
                                       std::size_t n = 1) {
  return {std::move(label), mode, round_to_tenth(active * 100.0), round_to_tenth(movement * 100.0),
          round_to_tenth(idle * 100.0), n};
}

// Rows sum to 100 within 0.1 after rounding each cell to a tenth.
inline bool breakdown_row_sums_ok(const BreakdownRow& r) { return std::abs(r.sum() - 100.0) <= 0.1 + 1e-9; }

inline BreakdownTable breakdown_report(const std::vector<BreakdownEntry>& entries) {
  if (entries.empty()) throw ValidationError("breakdown_report: no decompositions");
  struct Acc {
    double active = 0, movement = 0, idle = 0;
    std::size_t n = 0;
  };
  std::map<std::pair<std::string, Mode>, Acc> acc;
  BreakdownTable t;
  for (const auto& e : entries) {
    const auto& d = e.decomposition;
    auto& a = acc[{e.domain, e.mode}];
    a.active += d.active_fraction;
    a.movement += d.movement_fraction;
    a.idle += d.idle_fraction;
    ++a.n;
    t.per_workload.push_back(
        make_breakdown_row(e.workload, e.mode, d.active_fraction, d.movement_fraction, d.idle_fraction));
  }
  for (const auto& [key, a] : acc) {
    const double n = double(a.n);
    t.rows.push_back(make_breakdown_row(key.first, key.second, a.active / n, a.movement / n, a.idle / n, a.n));
  }
  return t;
}

}  // namespace benchguard
