#pragma once

// Built-in synthetic workloads and the synthetic trace generator.
//
// Each built-in is a closed-form model of how a GPU workload behaves as the
// batch size grows: a utilization curve (the active fraction of its device
// timeline), a batch size at which it runs out of memory, and a wall-time
// law. They are served to the harness through the ordinary subprocess
// protocol by the `benchguard-synth` executable, so measuring a built-in
// exercises exactly the code path a real model adapter would.

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "benchguard/errors.hpp"
#include "benchguard/measurement.hpp"
#include "benchguard/trace.hpp"
#include "benchguard/workload.hpp"

namespace benchguard {

inline constexpr std::int64_t kMiB = 1024 * 1024;

struct SyntheticWorkloadModel {
  std::string name;
  std::string domain;
  std::string description;
  std::set<Mode> modes = {Mode::train, Mode::eval};
  std::set<Device> devices = {Device::cpu, Device::gpu};
  std::int64_t default_train_batch_size = 1;

  // Active fraction of the device timeline, keyed by batch size. Sizes
  // between keys interpolate linearly in log2(batch size); sizes outside the
  // keyed range clamp to the nearest end.
  std::map<std::int64_t, double> util_curve;
  double movement_fraction = 0.0;

  std::int64_t oom_threshold = 1;  // batch sizes >= this report oom
  std::int64_t base_wall_time_us = 1000;
  double per_sample_us = 0.0;  // wall = base + per_sample * bs / util
  double train_factor = 3.0;
  double cpu_factor = 4.0;
  double noise = 0.0;  // relative, uniform in [-noise, +noise] per run
  std::uint64_t deterministic_seed = 0;

  std::int64_t cpu_mem_per_sample = 64 * 1024;
  std::int64_t gpu_mem_per_sample = kMiB;

  double utilization(std::int64_t batch_size) const {
    if (util_curve.empty()) return 1.0;
    auto hi = util_curve.lower_bound(batch_size);
    if (hi != util_curve.end() && hi->first == batch_size) return hi->second;
    if (hi == util_curve.begin()) return hi->second;
    if (hi == util_curve.end()) return std::prev(hi)->second;
    auto lo = std::prev(hi);
    double t = (std::log2(double(batch_size)) - std::log2(double(lo->first))) /
               (std::log2(double(hi->first)) - std::log2(double(lo->first)));
    return lo->second + t * (hi->second - lo->second);
  }
};

namespace detail {

inline std::map<std::int64_t, double> constant_curve(double u, std::int64_t upto) {
  std::map<std::int64_t, double> m;
  for (std::int64_t bs = 1; bs <= upto; bs *= 2) m[bs] = u;
  return m;
}

// splitmix64 finalizer; used to derive per-run streams from a seed.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Maps a hash to a uniform value in [-1, 1].
inline double unit_symmetric(std::uint64_t h) {
  return (double(h >> 11) * (1.0 / 9007199254740992.0)) * 2.0 - 1.0;
}

}  // namespace detail

// The built-in models. Curves are defined on every power of two the batch
// search can probe below each model's oom threshold.
inline const std::vector<SyntheticWorkloadModel>& builtin_models() {
  static const std::vector<SyntheticWorkloadModel> models = [] {
    std::vector<SyntheticWorkloadModel> v;

    SyntheticWorkloadModel matmul;
    matmul.name = "synth-matmul";
    matmul.domain = "nlp";
    matmul.description = "dense GEMM chain; utilization saturates, out of memory at 4096";
    matmul.default_train_batch_size = 64;
    matmul.util_curve = {{1, 0.20},   {2, 0.30},    {4, 0.40},   {8, 0.50},   {16, 0.60},  {32, 0.70},
                         {64, 0.78},  {128, 0.84},  {256, 0.88}, {512, 0.91}, {1024, 0.93}, {2048, 0.94}};
    matmul.movement_fraction = 0.01;
    matmul.oom_threshold = 4096;
    matmul.base_wall_time_us = 1000;
    matmul.per_sample_us = 2.0;
    matmul.deterministic_seed = 11;
    v.push_back(matmul);

    SyntheticWorkloadModel conv;
    conv.name = "synth-conv";
    conv.domain = "computer-vision";
    conv.description = "convolution stack; concave utilization peaking at batch 64, out of memory at 512";
    conv.default_train_batch_size = 32;
    conv.util_curve = {{1, 0.08},  {2, 0.15},  {4, 0.25},   {8, 0.40},   {16, 0.55},
                       {32, 0.72}, {64, 0.90}, {128, 0.78}, {256, 0.60}};
    conv.movement_fraction = 0.02;
    conv.oom_threshold = 512;
    conv.base_wall_time_us = 2000;
    conv.per_sample_us = 20.0;
    conv.deterministic_seed = 23;
    v.push_back(conv);

    SyntheticWorkloadModel mono;
    mono.name = "synth-mono";
    mono.domain = "recommendation";
    mono.description = "embedding lookups; utilization increases with batch, out of memory at 32";
    mono.default_train_batch_size = 8;
    mono.util_curve = {{1, 0.10}, {2, 0.20}, {4, 0.35}, {8, 0.50}, {16, 0.70}};
    mono.movement_fraction = 0.005;
    mono.oom_threshold = 32;
    mono.base_wall_time_us = 3000;
    mono.per_sample_us = 50.0;
    mono.gpu_mem_per_sample = 8 * kMiB;
    mono.deterministic_seed = 37;
    v.push_back(mono);

    SyntheticWorkloadModel constant;
    constant.name = "synth-const";
    constant.domain = "speech";
    constant.description = "fixed 7000 us computation region regardless of request";
    constant.default_train_batch_size = 16;
    constant.util_curve = detail::constant_curve(0.50, std::int64_t{1} << 15);
    constant.movement_fraction = 0.03;
    constant.oom_threshold = std::int64_t{1} << 20;
    constant.base_wall_time_us = 7000;
    constant.per_sample_us = 0.0;
    constant.train_factor = 1.0;
    constant.cpu_factor = 1.0;
    constant.gpu_mem_per_sample = 0;
    constant.cpu_mem_per_sample = 0;
    constant.deterministic_seed = 41;
    v.push_back(constant);

    SyntheticWorkloadModel noisy;
    noisy.name = "synth-noisy";
    noisy.domain = "reinforcement-learning";
    noisy.description = "small policy network with seeded +/-10% run-to-run wall-time noise, out of memory at 256";
    noisy.default_train_batch_size = 4;
    noisy.util_curve = {{1, 0.05}, {2, 0.09}, {4, 0.15}, {8, 0.22}, {16, 0.30}, {32, 0.33}, {64, 0.31}, {128, 0.27}};
    noisy.movement_fraction = 0.06;
    noisy.oom_threshold = 256;
    noisy.base_wall_time_us = 5000;
    noisy.per_sample_us = 10.0;
    noisy.noise = 0.10;
    noisy.deterministic_seed = 53;
    v.push_back(noisy);

    SyntheticWorkloadModel tiny;
    tiny.name = "synth-tiny";
    tiny.domain = "other";
    tiny.description = "runs out of memory at every batch size (oom threshold 1)";
    tiny.modes = {Mode::eval};
    tiny.default_train_batch_size = 1;
    tiny.oom_threshold = 1;
    tiny.base_wall_time_us = 1000;
    tiny.deterministic_seed = 59;
    v.push_back(tiny);

    return v;
  }();
  return models;
}

inline const SyntheticWorkloadModel* find_builtin_model(std::string_view name) {
  for (const auto& m : builtin_models())
    if (m.name == name) return &m;
  return nullptr;
}

// Locates the synthetic workload executable: $BENCHGUARD_SYNTH_EXE, then a
// `benchguard-synth` next to the running binary, then PATH lookup.
inline std::filesystem::path default_synth_executable() {
  if (const char* env = std::getenv("BENCHGUARD_SYNTH_EXE"); env && *env) return env;
  std::error_code ec;
  auto self = std::filesystem::read_symlink("/proc/self/exe", ec);
  if (!ec) {
    auto sibling = self.parent_path() / "benchguard-synth";
    if (std::filesystem::exists(sibling)) return sibling;
  }
  return "benchguard-synth";
}

inline WorkloadSpec spec_for_model(const SyntheticWorkloadModel& m, const std::filesystem::path& synth_exe) {
  WorkloadSpec s;
  s.name = m.name;
  s.domain = m.domain;
  s.supported_modes = m.modes;
  s.supported_devices = m.devices;
  s.default_train_batch_size = m.default_train_batch_size;
  s.executable = synth_exe;
  s.arguments = {"--workload", m.name};
  s.oom_exit_code = kDefaultOomExitCode;
  return s;
}

inline std::vector<WorkloadSpec> list_builtin_workloads(
    const std::filesystem::path& synth_exe = default_synth_executable()) {
  std::vector<WorkloadSpec> out;
  for (const auto& m : builtin_models()) out.push_back(spec_for_model(m, synth_exe));
  return out;
}

struct SimulatedRun {
  ExitClass exit_class = ExitClass::ok;
  Metrics metrics;
  double utilization = 0.0;  // target active fraction of the device trace
};

// Deterministic model evaluation. `run_index` selects the noise draw so that
// repeats differ while equal (request, run_index) pairs agree exactly.
inline SimulatedRun simulate_run(const SyntheticWorkloadModel& m, const RunRequest& req, std::int64_t run_index = 0) {
  req.validate();
  SimulatedRun r;
  if (req.batch_size >= m.oom_threshold) {
    r.exit_class = ExitClass::oom;
    return r;
  }
  r.utilization = m.utilization(req.batch_size);
  double wall = double(m.base_wall_time_us) + m.per_sample_us * double(req.batch_size) / std::max(r.utilization, 1e-3);
  wall *= double(req.iterations);
  if (req.mode == Mode::train) wall *= m.train_factor;
  if (req.device == Device::cpu) wall *= m.cpu_factor;
  if (m.noise > 0.0) {
    auto h = detail::mix64(detail::mix64(m.deterministic_seed) ^ static_cast<std::uint64_t>(run_index));
    wall *= 1.0 + m.noise * detail::unit_symmetric(h);
  }
  r.metrics.wall_time_us = std::max<std::int64_t>(1, std::llround(wall));

  const std::int64_t train_mul = req.mode == Mode::train ? 2 : 1;
  r.metrics.peak_cpu_mem_bytes = 64 * kMiB + req.batch_size * m.cpu_mem_per_sample * train_mul;
  r.metrics.peak_gpu_mem_bytes =
      req.device == Device::gpu ? 256 * kMiB + req.batch_size * m.gpu_mem_per_sample * train_mul : 0;
  r.metrics.post_run_resident_bytes = 32 * kMiB;
  return r;
}

// ---------------------------------------------------------------------------
// Synthetic traces

// Generates a trace whose decompose() over `wall_time_us` reproduces
// `target`, to within half a microsecond per component (rounding to the
// integer timeline). Beyond the minimal blocks, extra events either split
// blocks or are placed so they are hidden under compute (or under other
// copies), which exercises the union and compute-priority rules.
inline std::vector<TraceEvent> emit_synthetic_trace(const Decomposition& target, std::int64_t wall_time_us,
                                                    std::int64_t n_events, std::uint64_t seed) {
  target.validate_fractions();
  if (wall_time_us <= 0) throw ValidationError("wall_time must be > 0");
  if (n_events < 1) throw ValidationError("n_events must be >= 1");

  std::int64_t active = std::llround(target.active_fraction * double(wall_time_us));
  std::int64_t move = std::llround(target.movement_fraction * double(wall_time_us));
  active = std::clamp<std::int64_t>(active, 0, wall_time_us);
  move = std::clamp<std::int64_t>(move, 0, wall_time_us - active);
  const std::int64_t idle = wall_time_us - active - move;

  const std::int64_t required = (active > 0) + (move > 0);
  if (n_events < required)
    throw ValidationError("target needs " + std::to_string(required) + " events, only " + std::to_string(n_events) +
                          " allowed");

  std::mt19937_64 rng(seed);
  auto uniform = [&](std::int64_t lo, std::int64_t hi) {  // inclusive
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  };

  // Splits `total` into `k` parts, each >= `min_part`.
  auto split = [&](std::int64_t total, std::int64_t k, std::int64_t min_part) {
    std::vector<std::int64_t> cuts;
    const std::int64_t slack = total - k * min_part;
    for (std::int64_t i = 0; i + 1 < k; ++i) cuts.push_back(uniform(0, slack));
    std::sort(cuts.begin(), cuts.end());
    std::vector<std::int64_t> parts;
    std::int64_t prev = 0;
    for (auto c : cuts) {
      parts.push_back(c - prev + min_part);
      prev = c;
    }
    parts.push_back(slack - prev + min_part);
    return parts;
  };

  std::int64_t extra = n_events - required;
  std::int64_t split_budget = extra / 2;
  std::int64_t k_active = 0, k_move = 0;
  if (active > 0) {
    k_active = 1 + std::min(active - 1, uniform(0, split_budget));
    split_budget -= k_active - 1;
  }
  if (move > 0) {
    k_move = 1 + std::min(move - 1, uniform(0, split_budget));
  }
  extra -= (k_active - (active > 0)) + (k_move - (move > 0));

  struct Block {
    bool compute;
    std::int64_t length;
  };
  std::vector<Block> blocks;
  if (k_active > 0)
    for (auto len : split(active, k_active, 1)) blocks.push_back({true, len});
  if (k_move > 0)
    for (auto len : split(move, k_move, 1)) blocks.push_back({false, len});
  std::shuffle(blocks.begin(), blocks.end(), rng);
  auto gaps = split(idle, std::int64_t(blocks.size()) + 1, 0);

  std::vector<TraceEvent> events;
  std::vector<Interval> compute_spans, copy_spans;
  std::int64_t t = gaps[0];
  bool first_compute = true;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    TraceEvent ev;
    ev.start_us = t;
    ev.duration_us = blocks[i].length;
    if (blocks[i].compute) {
      bool d2d = !first_compute && uniform(0, 4) == 0;
      ev.category = d2d ? EventCategory::memcpy_d2d : EventCategory::kernel;
      ev.name = d2d ? "Memcpy DtoD (Device -> Device)" : "synth_kernel_" + std::to_string(events.size());
      ev.stream_id = 7;
      compute_spans.push_back({ev.start_us, ev.end_us()});
      first_compute = false;
    } else {
      bool h2d = uniform(0, 1) == 0;
      ev.category = h2d ? EventCategory::memcpy_h2d : EventCategory::memcpy_d2h;
      ev.name = h2d ? "Memcpy HtoD (Pageable -> Device)" : "Memcpy DtoH (Device -> Pageable)";
      ev.stream_id = 8;
      copy_spans.push_back({ev.start_us, ev.end_us()});
    }
    events.push_back(std::move(ev));
    t += blocks[i].length + gaps[i + 1];
  }

  // Hidden events: inside compute spans anything goes; inside copy-only spans
  // only more copies; with neither, runtime events that do not count.
  for (std::int64_t i = 0; i < extra; ++i) {
    TraceEvent ev;
    if (!compute_spans.empty()) {
      const auto& host = compute_spans[std::size_t(uniform(0, std::int64_t(compute_spans.size()) - 1))];
      ev.start_us = uniform(host.begin, host.end - 1);
      ev.duration_us = uniform(0, host.end - ev.start_us);
      switch (uniform(0, 3)) {
        case 0: ev.category = EventCategory::kernel; ev.name = "synth_overlap_kernel"; break;
        case 1: ev.category = EventCategory::memcpy_h2d; ev.name = "Memcpy HtoD (Pinned -> Device)"; break;
        case 2: ev.category = EventCategory::memcpy_d2h; ev.name = "Memcpy DtoH (Device -> Pinned)"; break;
        default: ev.category = EventCategory::memcpy_d2d; ev.name = "Memcpy DtoD (Device -> Device)"; break;
      }
      ev.stream_id = 9 + uniform(0, 2);
    } else if (!copy_spans.empty()) {
      const auto& host = copy_spans[std::size_t(uniform(0, std::int64_t(copy_spans.size()) - 1))];
      ev.start_us = uniform(host.begin, host.end - 1);
      ev.duration_us = uniform(0, host.end - ev.start_us);
      bool h2d = uniform(0, 1) == 0;
      ev.category = h2d ? EventCategory::memcpy_h2d : EventCategory::memcpy_d2h;
      ev.name = h2d ? "Memcpy HtoD (Pinned -> Device)" : "Memcpy DtoH (Device -> Pinned)";
      ev.stream_id = 12;
    } else {
      ev.start_us = uniform(0, wall_time_us);
      ev.duration_us = uniform(0, wall_time_us - ev.start_us);
      ev.category = EventCategory::other;
      ev.name = "cudaLaunchKernel";
      ev.stream_id = 1;
    }
    events.push_back(std::move(ev));
  }

  std::sort(events.begin(), events.end(), [](const TraceEvent& a, const TraceEvent& b) {
    return a.start_us != b.start_us ? a.start_us < b.start_us : a.stream_id < b.stream_id;
  });
  return events;
}

inline void emit_synthetic_trace_file(const std::filesystem::path& path, const Decomposition& target,
                                      std::int64_t wall_time_us, std::int64_t n_events, std::uint64_t seed) {
  write_trace_file(path, emit_synthetic_trace(target, wall_time_us, n_events, seed));
}

// Seed for the trace of one synthetic run.
inline std::uint64_t synthetic_trace_seed(const SyntheticWorkloadModel& m, std::int64_t bs, std::int64_t run_index) {
  return detail::mix64(m.deterministic_seed ^ static_cast<std::uint64_t>(bs) * 0x100000001b3ULL ^
                       static_cast<std::uint64_t>(run_index));
}

inline constexpr std::int64_t kSyntheticTraceEvents = 24;

// Writes the device trace of a successful synthetic gpu run.
inline void write_synthetic_run_trace(const SyntheticWorkloadModel& m, const SimulatedRun& run, std::int64_t bs,
                                      std::int64_t run_index, const std::filesystem::path& path,
                                      std::int64_t n_events = kSyntheticTraceEvents) {
  double active = run.utilization;
  double move = std::min(m.movement_fraction, 1.0 - active);
  auto target = Decomposition::from_fractions(active, move, 1.0 - active - move);
  emit_synthetic_trace_file(path, target, run.metrics.wall_time_us, n_events, synthetic_trace_seed(m, bs, run_index));
}

// Evaluates built-in workloads in-process (no subprocess, no sleeping). The
// spec's first fixed argument pair must name the model, as in the specs
// returned by list_builtin_workloads().
inline Runner builtin_runner() {
  return [](const WorkloadSpec& spec, const RunRequest& req, const RunContext& ctx) {
    const SyntheticWorkloadModel* model = find_builtin_model(spec.name);
    for (std::size_t i = 0; i + 1 < spec.arguments.size(); ++i)
      if (spec.arguments[i] == "--workload") model = find_builtin_model(spec.arguments[i + 1]);
    if (!model) throw ValidationError(spec.name + " is not a built-in synthetic workload");
    SyntheticWorkloadModel local = *model;
    for (std::size_t i = 0; i + 1 < spec.arguments.size(); ++i)
      if (spec.arguments[i] == "--oom-threshold") local.oom_threshold = detail::parse_int(spec.arguments[i + 1], "--oom-threshold");
    model = &local;
    if (!spec.supports(req.mode) || !spec.supports(req.device))
      throw ValidationError(spec.name + " does not support the requested mode/device");
    auto sim = simulate_run(*model, req, ctx.run_index);
    RunResult r;
    r.exit_class = sim.exit_class;
    if (sim.exit_class != ExitClass::ok) {
      r.exit_code = spec.oom_exit_code;
      return r;
    }
    r.metrics = sim.metrics;
    if (req.trace_requested && req.device == Device::gpu && ctx.trace_path) {
      write_synthetic_run_trace(*model, sim, req.batch_size, ctx.run_index, *ctx.trace_path);
      r.trace_path = ctx.trace_path;
    }
    return r;
  };
}

}  // namespace benchguard
