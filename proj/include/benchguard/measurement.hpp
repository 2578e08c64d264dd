#pragma once

// Measurement discipline: repeated runs with representative-run selection,
// the train/eval x cpu/gpu configuration matrix, and the eval batch-size
// doubling search.

#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "benchguard/errors.hpp"
#include "benchguard/process.hpp"
#include "benchguard/trace.hpp"
#include "benchguard/workload.hpp"

namespace benchguard {

// ---------------------------------------------------------------------------
// Invocation

struct InvokeOptions {
  std::chrono::milliseconds timeout{600'000};
  std::optional<std::filesystem::path> trace_path;  // used when the request asks for a trace
  std::map<std::string, std::string> extra_env;
};

inline RunResult invoke_workload(const WorkloadSpec& spec, const RunRequest& req, const InvokeOptions& opts = {}) {
  spec.validate();
  req.validate();
  if (!spec.supports(req.mode))
    throw ValidationError(spec.name + " does not support mode " + std::string(to_string(req.mode)));
  if (!spec.supports(req.device))
    throw ValidationError(spec.name + " does not support device " + std::string(to_string(req.device)));

  std::optional<std::filesystem::path> trace_out;
  if (req.trace_requested) {
    trace_out = opts.trace_path.value_or(std::filesystem::temp_directory_path() /
                                         ("benchguard-" + std::to_string(::getpid()) + "-" + spec.name + ".trace.json"));
  }

  std::vector<std::string> argv = {spec.executable.string()};
  argv.insert(argv.end(), spec.arguments.begin(), spec.arguments.end());
  auto tail = request_arguments(req, trace_out);
  argv.insert(argv.end(), tail.begin(), tail.end());

  auto proc = run_process(argv, ProcessOptions{opts.extra_env, opts.timeout});

  RunResult r;
  r.exit_code = proc.exit_code;
  if (proc.timed_out) {
    r.exit_class = ExitClass::workload_error;
    r.timed_out = true;
    r.diagnostic = "timed out after " + std::to_string(opts.timeout.count()) + " ms";
    return r;
  }
  if (proc.signaled) {
    r.exit_class = ExitClass::workload_error;
    r.diagnostic = "killed by signal " + std::to_string(proc.term_signal);
    return r;
  }
  if (proc.exit_code == spec.oom_exit_code) {
    r.exit_class = ExitClass::oom;
    return r;
  }
  if (proc.exit_code != 0) {
    r.exit_class = ExitClass::workload_error;
    r.diagnostic = "exit code " + std::to_string(proc.exit_code);
    if (!proc.err.empty()) r.diagnostic += ": " + proc.err.substr(0, 512);
    return r;
  }
  auto rec = parse_result_output(proc.out);
  if (!rec) {
    r.exit_class = ExitClass::protocol_error;
    r.diagnostic = "no result record on stdout";
    return r;
  }
  r.exit_class = ExitClass::ok;
  r.metrics = rec->metrics;
  if (rec->trace_path) r.trace_path = std::filesystem::path(*rec->trace_path);
  return r;
}

// Per-invocation context handed to a Runner by the measurement layer.
struct RunContext {
  std::int64_t run_index = 0;
  std::optional<std::filesystem::path> trace_path;
};

// Executes one workload invocation. The default runner spawns the workload
// process; tests and simulated providers substitute in-process runners.
using Runner = std::function<RunResult(const WorkloadSpec&, const RunRequest&, const RunContext&)>;

inline Runner subprocess_runner(InvokeOptions base = {}) {
  return [base](const WorkloadSpec& spec, const RunRequest& req, const RunContext& ctx) {
    InvokeOptions opts = base;
    opts.trace_path = ctx.trace_path;
    opts.extra_env[kRunIndexEnv] = std::to_string(ctx.run_index);
    return invoke_workload(spec, req, opts);
  };
}

// ---------------------------------------------------------------------------
// Cells and configurations

struct CellKey {
  std::string workload;
  Mode mode = Mode::eval;
  Device device = Device::cpu;

  std::string to_string() const {
    return workload + "/" + std::string(benchguard::to_string(mode)) + "/" + std::string(benchguard::to_string(device));
  }
  friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

enum class Reduction { median_run, arithmetic_mean };

inline std::string_view to_string(Reduction r) { return r == Reduction::median_run ? "median_run" : "arithmetic_mean"; }

inline Reduction parse_reduction(std::string_view s) {
  if (s == "median_run") return Reduction::median_run;
  if (s == "arithmetic_mean") return Reduction::arithmetic_mean;
  throw ValidationError("unknown reduction '" + std::string(s) + "'");
}

struct RunConfig {
  Mode mode = Mode::eval;
  Device device = Device::cpu;
  std::optional<std::int64_t> batch_size;  // nullopt = auto
  int repeats = 10;
  Reduction reduction = Reduction::median_run;
  std::int64_t iterations = 1;
  std::string precision = "fp32";

  void validate() const {
    if (repeats < 1) throw ValidationError("repeats must be >= 1");
    if (reduction == Reduction::arithmetic_mean && repeats < 2)
      throw ValidationError("arithmetic_mean reduction needs repeats >= 2");
    if (batch_size && *batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (iterations < 1) throw ValidationError("iterations must be >= 1");
  }
};

// The mean-speedup reporting convention: 20 repeats averaged.
inline RunConfig mean_speedup_config(Mode mode, Device device) {
  RunConfig c;
  c.mode = mode;
  c.device = device;
  c.repeats = 20;
  c.reduction = Reduction::arithmetic_mean;
  return c;
}

struct MeasurementSet {
  std::string workload;
  std::string domain;
  RunConfig config;                    // batch_size resolved
  std::vector<RunResult> runs;         // every raw run, in order, failures included
  std::optional<std::size_t> selected; // index into runs (median_run mode)
  Metrics summary;                     // selected run's metrics, or per-metric means
  bool degraded = false;               // some runs failed and were dropped
  std::optional<Decomposition> decomposition;  // of the selected run, when traced

  CellKey key() const { return {workload, config.mode, config.device}; }

  std::vector<std::size_t> ok_indices() const {
    std::vector<std::size_t> v;
    for (std::size_t i = 0; i < runs.size(); ++i)
      if (runs[i].ok()) v.push_back(i);
    return v;
  }
};

// Index of the median run: the ceil(n/2)-th smallest wall time for odd n,
// the (n/2)-th smallest (lower middle) for even n. Among runs sharing the
// median value the earliest index wins.
inline std::size_t select_median_run(const std::vector<RunResult>& runs) {
  if (runs.empty()) throw ValidationError("select_median_run: no runs");
  for (const auto& r : runs)
    if (!r.ok()) throw ValidationError("select_median_run: run with exit class " + std::string(to_string(r.exit_class)));
  std::vector<std::int64_t> times;
  times.reserve(runs.size());
  for (const auto& r : runs) times.push_back(r.metrics.wall_time_us);
  auto pos = times.begin() + static_cast<std::ptrdiff_t>((times.size() - 1) / 2);
  std::nth_element(times.begin(), pos, times.end());
  const auto median = *pos;
  for (std::size_t i = 0; i < runs.size(); ++i)
    if (runs[i].metrics.wall_time_us == median) return i;
  return 0;  // unreachable
}

inline Metrics mean_metrics(const std::vector<RunResult>& runs, const std::vector<std::size_t>& indices) {
  double w = 0, c = 0, g = 0, p = 0;
  for (auto i : indices) {
    w += double(runs[i].metrics.wall_time_us);
    c += double(runs[i].metrics.peak_cpu_mem_bytes);
    g += double(runs[i].metrics.peak_gpu_mem_bytes);
    p += double(runs[i].metrics.post_run_resident_bytes);
  }
  const double n = double(indices.size());
  return {std::llround(w / n), std::llround(c / n), std::llround(g / n), std::llround(p / n)};
}

struct MeasureOptions {
  // When set and the device is gpu, every run writes a trace here and the
  // selected run's decomposition is recorded.
  std::optional<std::filesystem::path> trace_dir;
};

inline std::filesystem::path trace_file_for(const std::filesystem::path& dir, const std::string& workload, Mode m,
                                            Device d, std::int64_t bs, std::int64_t run_index) {
  return dir / (workload + "." + std::string(to_string(m)) + "." + std::string(to_string(d)) + ".bs" +
                std::to_string(bs) + ".r" + std::to_string(run_index) + ".trace.json");
}

inline std::optional<Decomposition> decompose_run(const RunResult& r) {
  if (!r.ok() || !r.trace_path || !std::filesystem::exists(*r.trace_path)) return std::nullopt;
  return decompose(parse_trace_file(*r.trace_path), r.metrics.wall_time_us);
}

inline MeasurementSet measure(const WorkloadSpec& spec, const RunConfig& config, const Runner& runner,
                              const MeasureOptions& opts = {}) {
  config.validate();
  if (!config.batch_size) throw ValidationError("measure: batch_size must be resolved before measuring");
  if (!spec.supports(config.mode) || !spec.supports(config.device))
    throw ValidationError("measure: " + spec.name + " does not support " + std::string(to_string(config.mode)) + "/" +
                          std::string(to_string(config.device)));

  MeasurementSet set;
  set.workload = spec.name;
  set.domain = spec.domain;
  set.config = config;

  RunRequest req;
  req.mode = config.mode;
  req.device = config.device;
  req.batch_size = *config.batch_size;
  req.iterations = config.iterations;
  req.precision = config.precision;
  req.trace_requested = opts.trace_dir.has_value() && config.device == Device::gpu;

  for (int i = 0; i < config.repeats; ++i) {
    RunContext ctx;
    ctx.run_index = i;
    if (req.trace_requested)
      ctx.trace_path = trace_file_for(*opts.trace_dir, spec.name, req.mode, req.device, req.batch_size, i);
    auto r = runner(spec, req, ctx);
    if (r.exit_class == ExitClass::oom)
      throw OomError(spec.name + " ran out of memory at batch size " + std::to_string(req.batch_size));
    set.runs.push_back(std::move(r));
  }

  const auto ok = set.ok_indices();
  const auto failures = set.runs.size() - ok.size();
  const auto tolerated = (static_cast<std::size_t>(config.repeats) + 1) / 2;
  if (failures > tolerated)
    throw MeasurementError(spec.name + ": " + std::to_string(failures) + " of " + std::to_string(config.repeats) +
                           " runs failed");
  if (failures > 0) {
    set.degraded = true;
    if (ok.size() < 3)
      throw MeasurementError(spec.name + ": only " + std::to_string(ok.size()) + " runs survived, need 3");
  }

  if (config.reduction == Reduction::median_run) {
    std::vector<RunResult> survivors;
    for (auto i : ok) survivors.push_back(set.runs[i]);
    set.selected = ok[select_median_run(survivors)];
    set.summary = set.runs[*set.selected].metrics;
    set.decomposition = decompose_run(set.runs[*set.selected]);
  } else {
    set.summary = mean_metrics(set.runs, ok);
  }
  return set;
}

// ---------------------------------------------------------------------------
// Batch-size search

inline constexpr std::int64_t kDefaultBatchCap = std::int64_t{1} << 15;

struct SearchOptions {
  std::int64_t cap = kDefaultBatchCap;
  std::optional<std::filesystem::path> trace_dir;  // temp directory when unset
};

struct SearchProbe {
  std::int64_t batch_size = 0;
  ExitClass exit_class = ExitClass::ok;
  std::optional<double> active_fraction;  // from the device trace
  double throughput = 0.0;                // samples per second
};

struct SearchResult {
  std::int64_t batch_size = 0;
  std::string criterion;  // "active_fraction" or "throughput"
  std::vector<SearchProbe> probes;
};

// Probes bs = 1, 2, 4, ... with one run each until the first oom or the cap
// and returns the probe with the highest utilization, preferring the larger
// batch on ties. GPU probes are scored by the trace active fraction; when a
// probe has no trace (cpu, or an adapter without tracing) all probes are
// scored by throughput instead.
inline SearchResult search_batch_size(const WorkloadSpec& spec, Mode mode, Device device, const Runner& runner,
                                      const SearchOptions& opts = {}) {
  if (mode != Mode::eval) throw ValidationError("batch-size search applies to eval; train uses the default batch size");
  if (!spec.supports(mode) || !spec.supports(device))
    throw ValidationError("search: " + spec.name + " does not support eval/" + std::string(to_string(device)));
  if (opts.cap < 1) throw ValidationError("search cap must be >= 1");

  auto trace_dir = opts.trace_dir.value_or(std::filesystem::temp_directory_path() /
                                           ("benchguard-search-" + std::to_string(::getpid())));
  SearchResult result;
  for (std::int64_t bs = 1; bs <= opts.cap; bs *= 2) {
    RunRequest req;
    req.mode = mode;
    req.device = device;
    req.batch_size = bs;
    req.trace_requested = device == Device::gpu;
    RunContext ctx;
    if (req.trace_requested) {
      std::filesystem::create_directories(trace_dir);
      ctx.trace_path = trace_file_for(trace_dir, spec.name, mode, device, bs, 0);
    }
    auto r = runner(spec, req, ctx);
    SearchProbe probe;
    probe.batch_size = bs;
    probe.exit_class = r.exit_class;
    if (r.ok()) {
      probe.throughput = double(bs) * 1e6 / double(r.metrics.wall_time_us);
      if (device == Device::gpu) {
        if (auto d = decompose_run(r)) probe.active_fraction = d->active_fraction;
      }
      if (r.trace_path && !opts.trace_dir) std::filesystem::remove(*r.trace_path);
    }
    result.probes.push_back(probe);
    if (r.exit_class == ExitClass::oom) break;
    if (bs > opts.cap / 2) break;
  }
  if (!opts.trace_dir) {
    std::error_code ec;
    std::filesystem::remove_all(trace_dir, ec);
  }

  if (result.probes.front().exit_class == ExitClass::oom)
    throw SearchError(SearchError::Kind::no_feasible_batch, spec.name + ": no feasible batch size (out of memory at batch size 1)");

  bool all_traced = true, any_ok = false;
  for (const auto& p : result.probes) {
    if (p.exit_class != ExitClass::ok) continue;
    any_ok = true;
    all_traced = all_traced && p.active_fraction.has_value();
  }
  if (!any_ok) throw SearchError(SearchError::Kind::search_failure, spec.name + ": no batch-size probe succeeded");

  result.criterion = all_traced ? "active_fraction" : "throughput";
  double best = -1.0;
  for (const auto& p : result.probes) {
    if (p.exit_class != ExitClass::ok) continue;
    double score = all_traced ? *p.active_fraction : p.throughput;
    if (score >= best) {
      best = score;
      result.batch_size = p.batch_size;
    }
  }
  return result;
}

// Remembers searched eval batch sizes, one key-value file per
// (workload, device):
//
//   <dir>/<workload>.<device>.bs
//     workload = synth-conv
//     device = gpu
//     batch_size = 64
class BatchSizeCache {
 public:
  explicit BatchSizeCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::filesystem::path path_for(const std::string& workload, Device d) const {
    return dir_ / (workload + "." + std::string(to_string(d)) + ".bs");
  }

  std::optional<std::int64_t> get(const std::string& workload, Device d) const {
    auto p = path_for(workload, d);
    if (!std::filesystem::exists(p)) return std::nullopt;
    auto kv = parse_key_values(read_file(p), p.string());
    auto it = kv.find("batch_size");
    if (it == kv.end()) throw ParseError(p.string() + ": missing batch_size");
    auto bs = detail::parse_int(it->second, p.string());
    if (bs < 1) throw ParseError(p.string() + ": batch_size must be >= 1");
    return bs;
  }

  void put(const std::string& workload, Device d, std::int64_t bs) const {
    std::filesystem::create_directories(dir_);
    auto p = path_for(workload, d);
    auto tmp = p;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << "workload = " << workload << "\ndevice = " << to_string(d) << "\nbatch_size = " << bs << "\n";
    }
    std::filesystem::rename(tmp, p);
  }

 private:
  std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Configuration matrix

enum class CellStatus { measured, skipped };

inline std::string_view to_string(CellStatus s) {
  switch (s) {
    case CellStatus::measured: return "measured";
    case CellStatus::skipped: return "skipped";
  }
  return "?";
}

// Reason prefix for supported cells that could not be measured (for
// example no feasible batch size).
inline constexpr std::string_view kMeasurementFailedReason = "measurement failed: ";

struct MatrixCell {
  Mode mode = Mode::eval;
  Device device = Device::cpu;
  CellStatus status = CellStatus::skipped;
  std::string reason;  // set unless measured
  std::optional<MeasurementSet> measurement;

  bool measurement_failed() const { return reason.rfind(kMeasurementFailedReason, 0) == 0; }
};

struct ConfigMatrix {
  std::string workload;
  std::array<MatrixCell, 4> cells;
};

// Row order: train/cpu, train/gpu, eval/cpu, eval/gpu.
inline constexpr std::array<std::pair<Mode, Device>, 4> kMatrixCells = {{
    {Mode::train, Device::cpu},
    {Mode::train, Device::gpu},
    {Mode::eval, Device::cpu},
    {Mode::eval, Device::gpu},
}};

struct MatrixOptions {
  std::set<Device> available_devices = {Device::cpu, Device::gpu};
  const BatchSizeCache* batch_cache = nullptr;
  MeasureOptions measure;
  SearchOptions search;
};

inline ConfigMatrix run_matrix(const WorkloadSpec& spec, const RunConfig& base, const Runner& runner,
                               const MatrixOptions& opts = {}) {
  ConfigMatrix matrix;
  matrix.workload = spec.name;
  for (std::size_t i = 0; i < kMatrixCells.size(); ++i) {
    auto [mode, device] = kMatrixCells[i];
    auto& cell = matrix.cells[i];
    cell.mode = mode;
    cell.device = device;
    if (!spec.supports(mode)) {
      cell.reason = "mode unsupported";
      continue;
    }
    if (!spec.supports(device)) {
      cell.reason = "device unsupported";
      continue;
    }
    if (!opts.available_devices.count(device)) {
      cell.reason = "device unavailable";
      continue;
    }
    try {
      RunConfig cfg = base;
      cfg.mode = mode;
      cfg.device = device;
      if (!cfg.batch_size) {
        if (mode == Mode::train) {
          cfg.batch_size = spec.default_train_batch_size;
        } else if (auto cached = opts.batch_cache ? opts.batch_cache->get(spec.name, device) : std::nullopt) {
          cfg.batch_size = *cached;
        } else {
          cfg.batch_size = search_batch_size(spec, mode, device, runner, opts.search).batch_size;
          if (opts.batch_cache) opts.batch_cache->put(spec.name, device, *cfg.batch_size);
        }
      }
      cell.measurement = measure(spec, cfg, runner, opts.measure);
      cell.status = CellStatus::measured;
    } catch (const Error& e) {
      cell.status = CellStatus::skipped;
      cell.reason = std::string(kMeasurementFailedReason) + e.what();
    }
  }
  return matrix;
}

}  // namespace benchguard
