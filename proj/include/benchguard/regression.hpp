#pragma once

// Regression sentinel: per-cell baselines, threshold detection, and baseline
// advancement.
//
// A finding is raised for a cell when observed/baseline >= 1 + threshold
// for wall time (only if the baseline is at least min_abs_time), peak CPU
// memory or peak GPU memory, or when post-run resident memory grew by at
// least leak_threshold bytes.

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "benchguard/errors.hpp"
#include "benchguard/measurement.hpp"
#include "benchguard/workload.hpp"

namespace benchguard {

inline constexpr int kBaselineSchemaVersion = 1;

enum class Metric { wall_time, peak_cpu_mem, peak_gpu_mem, leak };

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::wall_time: return "wall_time";
    case Metric::peak_cpu_mem: return "peak_cpu_mem";
    case Metric::peak_gpu_mem: return "peak_gpu_mem";
    case Metric::leak: return "leak";
  }
  return "?";
}

inline Metric parse_metric(std::string_view s) {
  for (auto m : {Metric::wall_time, Metric::peak_cpu_mem, Metric::peak_gpu_mem, Metric::leak})
    if (to_string(m) == s) return m;
  throw ValidationError("unknown metric '" + std::string(s) + "'");
}

inline std::int64_t metric_value(const Metrics& m, Metric which) {
  switch (which) {
    case Metric::wall_time: return m.wall_time_us;
    case Metric::peak_cpu_mem: return m.peak_cpu_mem_bytes;
    case Metric::peak_gpu_mem: return m.peak_gpu_mem_bytes;
    case Metric::leak: return m.post_run_resident_bytes;
  }
  return 0;
}

struct Provenance {
  std::string commit;
  std::int64_t timestamp = 0;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct BaselineCell {
  Metrics metrics;
  Provenance provenance;
  friend bool operator==(const BaselineCell&, const BaselineCell&) = default;
};

struct Baseline {
  int schema_version = kBaselineSchemaVersion;
  Provenance provenance;  // of the most recent update
  std::map<CellKey, BaselineCell> cells;

  bool empty() const { return cells.empty(); }
  friend bool operator==(const Baseline&, const Baseline&) = default;
};

struct RegressionPolicy {
  double time_threshold = 0.07;
  double mem_threshold = 0.07;
  std::int64_t leak_threshold_bytes = 1024 * 1024;
  std::int64_t min_abs_time_us = 1000;

  void validate() const {
    if (!(time_threshold > 0) || !(mem_threshold > 0) || leak_threshold_bytes <= 0)
      throw ValidationError("regression thresholds must be > 0");
    if (min_abs_time_us < 0) throw ValidationError("min_abs_time must be >= 0");
  }

  double threshold_for(Metric m) const { return m == Metric::wall_time ? time_threshold : mem_threshold; }
};

// Ratio rule shared by detection and bisection probes.
inline bool exceeds_threshold(double ratio, double threshold) { return ratio >= 1.0 + threshold; }

// Whether `observed` is a regression of `metric` against `baseline`.
// Wall-time findings also require the baseline to clear the min-time floor
// when `apply_floor` is set.
inline bool is_regression(Metric metric, std::int64_t baseline, std::int64_t observed, const RegressionPolicy& policy,
                          bool apply_floor = true) {
  if (metric == Metric::leak) return observed - baseline >= policy.leak_threshold_bytes;
  if (baseline <= 0) return false;
  if (metric == Metric::wall_time && apply_floor && baseline < policy.min_abs_time_us) return false;
  return exceeds_threshold(double(observed) / double(baseline), policy.threshold_for(metric));
}

struct RegressionFinding {
  CellKey cell;
  Metric metric = Metric::wall_time;
  std::int64_t baseline_value = 0;
  std::int64_t observed_value = 0;
  double ratio = 1.0;  // observed / baseline (0 when the baseline is 0)
  Provenance baseline_provenance;
  std::optional<std::string> culprit;
};

struct DetectionResult {
  std::vector<RegressionFinding> findings;
  std::vector<CellKey> new_cells;  // observed but absent from the baseline

  bool clean() const { return findings.empty(); }
  bool flagged(const CellKey& k) const {
    for (const auto& f : findings)
      if (f.cell == k) return true;
    return false;
  }
};

inline DetectionResult detect_regressions(const Baseline& baseline, const std::vector<MeasurementSet>& observed,
                                          const RegressionPolicy& policy) {
  policy.validate();
  if (observed.empty()) throw ValidationError("detect_regressions: no observed measurements");
  if (baseline.schema_version != kBaselineSchemaVersion)
    throw ValidationError("baseline schema version " + std::to_string(baseline.schema_version) + " != " +
                          std::to_string(kBaselineSchemaVersion));

  DetectionResult out;
  for (const auto& set : observed) {
    auto key = set.key();
    auto it = baseline.cells.find(key);
    if (it == baseline.cells.end()) {
      out.new_cells.push_back(key);
      continue;
    }
    const auto& base = it->second;
    for (auto metric : {Metric::wall_time, Metric::peak_cpu_mem, Metric::peak_gpu_mem, Metric::leak}) {
      auto b = metric_value(base.metrics, metric);
      auto o = metric_value(set.summary, metric);
      if (!is_regression(metric, b, o, policy)) continue;
      RegressionFinding f;
      f.cell = key;
      f.metric = metric;
      f.baseline_value = b;
      f.observed_value = o;
      f.ratio = b > 0 ? double(o) / double(b) : 0.0;
      f.baseline_provenance = base.provenance;
      out.findings.push_back(std::move(f));
    }
  }
  return out;
}

// Advances the baseline: clean and new cells take the observed metrics and
// the new provenance, flagged cells keep their previous values. Without a
// prior baseline the observed matrix becomes the baseline.
inline Baseline update_baseline(const std::optional<Baseline>& prior, const std::vector<MeasurementSet>& observed,
                                const DetectionResult& detection, const Provenance& provenance) {
  Baseline next = prior.value_or(Baseline{});
  next.schema_version = kBaselineSchemaVersion;
  next.provenance = provenance;
  for (const auto& set : observed) {
    auto key = set.key();
    if (prior && detection.flagged(key)) continue;
    next.cells[key] = BaselineCell{set.summary, provenance};
  }
  return next;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["wall_time_us"] = m.wall_time_us;
  j["peak_cpu_mem_bytes"] = m.peak_cpu_mem_bytes;
  j["peak_gpu_mem_bytes"] = m.peak_gpu_mem_bytes;
  j["post_run_resident_bytes"] = m.post_run_resident_bytes;
  return j;
}

inline Metrics metrics_from_json(const nlohmann::json& j) {
  Metrics m;
  m.wall_time_us = j.at("wall_time_us").get<std::int64_t>();
  m.peak_cpu_mem_bytes = j.at("peak_cpu_mem_bytes").get<std::int64_t>();
  m.peak_gpu_mem_bytes = j.at("peak_gpu_mem_bytes").get<std::int64_t>();
  m.post_run_resident_bytes = j.at("post_run_resident_bytes").get<std::int64_t>();
  return m;
}

inline nlohmann::ordered_json to_json(const Provenance& p) {
  return nlohmann::ordered_json{{"commit", p.commit}, {"timestamp", p.timestamp}};
}

inline Provenance provenance_from_json(const nlohmann::json& j) {
  return {j.at("commit").get<std::string>(), j.at("timestamp").get<std::int64_t>()};
}

inline nlohmann::ordered_json to_json(const CellKey& k) {
  return nlohmann::ordered_json{
      {"workload", k.workload}, {"mode", to_string(k.mode)}, {"device", to_string(k.device)}};
}

inline CellKey cell_key_from_json(const nlohmann::json& j) {
  return {j.at("workload").get<std::string>(), parse_mode(j.at("mode").get<std::string>()),
          parse_device(j.at("device").get<std::string>())};
}

inline nlohmann::ordered_json to_json(const Baseline& b) {
  nlohmann::ordered_json j;
  j["schema_version"] = b.schema_version;
  j["provenance"] = to_json(b.provenance);
  auto cells = nlohmann::ordered_json::array();
  for (const auto& [key, cell] : b.cells) {
    auto c = to_json(key);
    c["metrics"] = to_json(cell.metrics);
    c["provenance"] = to_json(cell.provenance);
    cells.push_back(std::move(c));
  }
  j["cells"] = std::move(cells);
  return j;
}

inline Baseline baseline_from_json(const nlohmann::json& j) {
  try {
    Baseline b;
    b.schema_version = j.at("schema_version").get<int>();
    b.provenance = provenance_from_json(j.at("provenance"));
    for (const auto& c : j.at("cells")) {
      b.cells[cell_key_from_json(c)] =
          BaselineCell{metrics_from_json(c.at("metrics")), provenance_from_json(c.at("provenance"))};
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("baseline: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Store
//
// <dir>/baseline.current   the current baseline (JSON, replaced atomically)
// <dir>/history.jsonl      every accepted baseline, one JSON object per line,
//                          append-only
// <dir>/.lock              held while a process mutates the store

class StoreLock {
 public:
  explicit StoreLock(std::filesystem::path path) : path_(std::move(path)) {
    for (int attempt = 0; attempt < 2; ++attempt) {
      int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY | O_CLOEXEC, 0644);
      if (fd >= 0) {
        auto pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
        ::close(fd);
        return;
      }
      if (errno != EEXIST) throw StoreError("cannot create lock " + path_.string() + ": " + std::strerror(errno));
      if (!stale()) break;
      std::filesystem::remove(path_);
    }
    throw StoreError("baseline store is locked by another process: " + path_.string());
  }
  StoreLock(const StoreLock&) = delete;
  StoreLock& operator=(const StoreLock&) = delete;
  ~StoreLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }

 private:
  // A lock whose owner pid no longer exists.
  bool stale() const {
    std::ifstream in(path_);
    long pid = 0;
    if (!(in >> pid) || pid <= 0) return false;
    return ::kill(static_cast<pid_t>(pid), 0) != 0 && errno == ESRCH;
  }

  std::filesystem::path path_;
};

class BaselineStore {
 public:
  explicit BaselineStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path current_path() const { return dir_ / "baseline.current"; }
  std::filesystem::path history_path() const { return dir_ / "history.jsonl"; }

  StoreLock lock() const {
    std::filesystem::create_directories(dir_);
    return StoreLock(dir_ / ".lock");
  }

  std::optional<Baseline> load() const {
    if (!std::filesystem::exists(current_path())) return std::nullopt;
    auto j = nlohmann::json::parse(read_file(current_path()), nullptr, false);
    if (j.is_discarded()) throw ParseError(current_path().string() + ": invalid JSON");
    auto b = baseline_from_json(j);
    if (b.schema_version != kBaselineSchemaVersion)
      throw StoreError("unsupported baseline schema version " + std::to_string(b.schema_version));
    return b;
  }

  // Appends to the history, then replaces the current pointer.
  void save(const Baseline& b) const {
    std::filesystem::create_directories(dir_);
    {
      std::ofstream hist(history_path(), std::ios::app | std::ios::binary);
      if (!hist) throw StoreError("cannot append " + history_path().string());
      hist << to_json(b).dump() << "\n";
      if (!hist.flush()) throw StoreError("cannot append " + history_path().string());
    }
    auto tmp = current_path();
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
      if (!out) throw StoreError("cannot write " + tmp.string());
      out << to_json(b).dump(2) << "\n";
    }
    std::filesystem::rename(tmp, current_path());
  }

  std::vector<Baseline> history() const {
    std::vector<Baseline> out;
    if (!std::filesystem::exists(history_path())) return out;
    std::ifstream in(history_path());
    std::size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
      ++lineno;
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) throw ParseError(history_path().string() + ":" + std::to_string(lineno) + ": invalid JSON");
      out.push_back(baseline_from_json(j));
    }
    return out;
  }

 private:
  std::filesystem::path dir_;
};

}  // namespace benchguard
