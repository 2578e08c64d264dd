#pragma once

// Workload contract shared by the harness and benchmark executables.
//
// A workload is an executable invoked as
//
//   <executable> <fixed args...> --mode <train|eval> --device <cpu|gpu>
//                --bs <N> --iterations <N> --precision <label> [--trace-out <path>]
//
// that times only its computation region and prints one JSON result record
// on stdout:
//
//   {"wall_time_us": 7000, "peak_cpu_mem_bytes": ..., "peak_gpu_mem_bytes": ...,
//    "post_run_resident_bytes": ..., "trace_path": "optional"}
//
// Exit status 0 is success, the spec's oom_exit_code (42 by default) is
// out-of-memory, anything else a workload error.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "benchguard/errors.hpp"

namespace benchguard {

enum class Mode { train, eval };
enum class Device { cpu, gpu };
enum class ExitClass { ok, oom, protocol_error, workload_error };

inline constexpr int kDefaultOomExitCode = 42;

// Environment variable carrying the 0-based repeat index of an invocation.
// Workloads may ignore it; the seeded synthetic ones use it to vary noise.
inline constexpr const char* kRunIndexEnv = "BENCHGUARD_RUN_INDEX";

inline std::string_view to_string(Mode m) { return m == Mode::train ? "train" : "eval"; }
inline std::string_view to_string(Device d) { return d == Device::cpu ? "cpu" : "gpu"; }

inline std::string_view to_string(ExitClass c) {
  switch (c) {
    case ExitClass::ok: return "ok";
    case ExitClass::oom: return "oom";
    case ExitClass::protocol_error: return "protocol_error";
    case ExitClass::workload_error: return "workload_error";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "train") return Mode::train;
  if (s == "eval") return Mode::eval;
  throw ValidationError("unknown mode '" + std::string(s) + "' (expected train|eval)");
}

inline Device parse_device(std::string_view s) {
  if (s == "cpu") return Device::cpu;
  if (s == "gpu") return Device::gpu;
  throw ValidationError("unknown device '" + std::string(s) + "' (expected cpu|gpu)");
}

inline ExitClass parse_exit_class(std::string_view s) {
  for (auto c : {ExitClass::ok, ExitClass::oom, ExitClass::protocol_error, ExitClass::workload_error})
    if (to_string(c) == s) return c;
  throw ValidationError("unknown exit class '" + std::string(s) + "'");
}

struct WorkloadSpec {
  std::string name;
  std::string domain;
  std::set<Mode> supported_modes;
  std::set<Device> supported_devices;
  std::int64_t default_train_batch_size = 1;
  std::filesystem::path executable;
  std::vector<std::string> arguments;  // fixed, prepended to the request flags
  int oom_exit_code = kDefaultOomExitCode;

  bool supports(Mode m) const { return supported_modes.count(m) != 0; }
  bool supports(Device d) const { return supported_devices.count(d) != 0; }

  void validate() const {
    if (name.empty()) throw ValidationError("workload name is empty");
    if (supported_modes.empty()) throw ValidationError(name + ": supported_modes is empty");
    if (supported_devices.empty()) throw ValidationError(name + ": supported_devices is empty");
    if (default_train_batch_size < 1)
      throw ValidationError(name + ": default_train_batch_size must be >= 1");
    if (executable.empty()) throw ValidationError(name + ": executable is empty");
  }
};

struct RunRequest {
  Mode mode = Mode::eval;
  Device device = Device::cpu;
  std::int64_t batch_size = 1;
  std::int64_t iterations = 1;
  std::string precision = "fp32";
  bool trace_requested = false;

  void validate() const {
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (iterations < 1) throw ValidationError("iterations must be >= 1");
    if (precision.empty()) throw ValidationError("precision label is empty");
  }
};

// The four metrics every successful run reports. Times in microseconds,
// memory in bytes.
struct Metrics {
  std::int64_t wall_time_us = 0;
  std::int64_t peak_cpu_mem_bytes = 0;
  std::int64_t peak_gpu_mem_bytes = 0;
  std::int64_t post_run_resident_bytes = 0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

struct RunResult {
  ExitClass exit_class = ExitClass::workload_error;
  Metrics metrics;  // meaningful only when exit_class == ok
  std::optional<std::filesystem::path> trace_path;
  bool timed_out = false;
  int exit_code = 0;
  std::string diagnostic;

  bool ok() const { return exit_class == ExitClass::ok; }
};

// Builds the argv tail for a request, excluding executable and fixed args.
inline std::vector<std::string> request_arguments(const RunRequest& req,
                                                  const std::optional<std::filesystem::path>& trace_out) {
  std::vector<std::string> args = {"--mode",       std::string(to_string(req.mode)),
                                   "--device",     std::string(to_string(req.device)),
                                   "--bs",         std::to_string(req.batch_size),
                                   "--iterations", std::to_string(req.iterations),
                                   "--precision",  req.precision};
  if (trace_out) {
    args.push_back("--trace-out");
    args.push_back(trace_out->string());
  }
  return args;
}

// ---------------------------------------------------------------------------
// Result record

struct ResultRecord {
  Metrics metrics;
  std::optional<std::string> trace_path;
};

inline std::string format_result_record(const ResultRecord& rec) {
  nlohmann::ordered_json j;
  j["wall_time_us"] = rec.metrics.wall_time_us;
  j["peak_cpu_mem_bytes"] = rec.metrics.peak_cpu_mem_bytes;
  j["peak_gpu_mem_bytes"] = rec.metrics.peak_gpu_mem_bytes;
  j["post_run_resident_bytes"] = rec.metrics.post_run_resident_bytes;
  if (rec.trace_path) j["trace_path"] = *rec.trace_path;
  return j.dump();
}

namespace detail {

inline std::optional<std::int64_t> nonnegative_integer(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number_integer()) return std::nullopt;
  auto v = it->get<std::int64_t>();
  if (v < 0) return std::nullopt;
  return v;
}

}  // namespace detail

// Parses one record line. Returns nullopt when the line is not a valid record.
inline std::optional<ResultRecord> parse_result_line(std::string_view line) {
  auto j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  ResultRecord rec;
  auto wall = detail::nonnegative_integer(j, "wall_time_us");
  auto cpu = detail::nonnegative_integer(j, "peak_cpu_mem_bytes");
  auto gpu = detail::nonnegative_integer(j, "peak_gpu_mem_bytes");
  auto resident = detail::nonnegative_integer(j, "post_run_resident_bytes");
  if (!wall || !cpu || !gpu || !resident || *wall == 0) return std::nullopt;
  rec.metrics = {*wall, *cpu, *gpu, *resident};
  if (auto it = j.find("trace_path"); it != j.end()) {
    if (!it->is_string()) return std::nullopt;
    rec.trace_path = it->get<std::string>();
  }
  return rec;
}

// Extracts the result record from a workload's stdout. Log lines before the
// record are tolerated; the last line that parses as a record wins.
inline std::optional<ResultRecord> parse_result_output(std::string_view out) {
  std::optional<ResultRecord> found;
  std::size_t pos = 0;
  while (pos < out.size()) {
    auto nl = out.find('\n', pos);
    auto line = out.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    auto first = line.find_first_not_of(" \t\r");
    if (first != std::string_view::npos && line[first] == '{') {
      if (auto rec = parse_result_line(line)) found = std::move(rec);
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return found;
}

// ---------------------------------------------------------------------------
// Registry
//
// A registry is a directory of `*.workload` files in key = value form:
//
//   name = synth-conv
//   domain = computer-vision
//   modes = train,eval
//   devices = cpu,gpu
//   default_train_batch_size = 32
//   executable = ../bin/my_model      (relative to the file, or @synth)
//   args = --workload synth-conv      (whitespace separated)
//   oom_exit_code = 42
//
// Blank lines and lines starting with '#' are ignored.

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    auto next = s.find(sep, pos);
    auto piece = trim(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (!piece.empty()) out.push_back(std::move(piece));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

inline std::int64_t parse_int(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    throw ParseError(what + ": not an integer: '" + s + "'");
  }
  if (used != s.size()) throw ParseError(what + ": not an integer: '" + s + "'");
  return v;
}

}  // namespace detail

// Parses key = value text into a map. Duplicate keys are an error.
inline std::map<std::string, std::string> parse_key_values(std::string_view text, const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  int lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    auto t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    auto key = detail::trim(std::string_view(t).substr(0, eq));
    auto value = detail::trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ParseError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second)
      throw ParseError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return kv;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Placeholder executable value resolved to the bundled synthetic workload binary.
inline constexpr std::string_view kSynthExecutableToken = "@synth";

inline WorkloadSpec parse_workload_spec(std::string_view text, const std::filesystem::path& origin,
                                        const std::filesystem::path& synth_executable = {}) {
  auto kv = parse_key_values(text, origin.string());
  auto take = [&](const char* key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    auto v = it->second;
    kv.erase(it);
    return v;
  };
  auto require = [&](const char* key) {
    auto v = take(key);
    if (!v) throw ParseError(origin.string() + ": missing key '" + key + "'");
    return *v;
  };

  WorkloadSpec spec;
  spec.name = require("name");
  spec.domain = take("domain").value_or("unspecified");
  for (const auto& m : detail::split(require("modes"), ',')) spec.supported_modes.insert(parse_mode(m));
  for (const auto& d : detail::split(require("devices"), ',')) spec.supported_devices.insert(parse_device(d));
  if (auto v = take("default_train_batch_size"))
    spec.default_train_batch_size = detail::parse_int(*v, origin.string() + ": default_train_batch_size");
  auto exe = require("executable");
  if (exe == kSynthExecutableToken) {
    spec.executable = synth_executable;
  } else {
    std::filesystem::path p(exe);
    spec.executable = p.is_relative() && exe.find('/') != std::string::npos ? origin.parent_path() / p : p;
  }
  if (auto v = take("args")) spec.arguments = detail::split_ws(*v);
  if (auto v = take("oom_exit_code"))
    spec.oom_exit_code = static_cast<int>(detail::parse_int(*v, origin.string() + ": oom_exit_code"));
  if (!kv.empty()) throw ParseError(origin.string() + ": unknown key '" + kv.begin()->first + "'");
  spec.validate();
  return spec;
}

inline std::string format_workload_spec(const WorkloadSpec& spec) {
  std::ostringstream out;
  auto join = [](const auto& set) {
    std::string s;
    for (auto v : set) s += (s.empty() ? "" : ",") + std::string(to_string(v));
    return s;
  };
  out << "name = " << spec.name << "\n"
      << "domain = " << spec.domain << "\n"
      << "modes = " << join(spec.supported_modes) << "\n"
      << "devices = " << join(spec.supported_devices) << "\n"
      << "default_train_batch_size = " << spec.default_train_batch_size << "\n"
      << "executable = " << spec.executable.string() << "\n";
  if (!spec.arguments.empty()) {
    out << "args =";
    for (const auto& a : spec.arguments) out << " " << a;
    out << "\n";
  }
  out << "oom_exit_code = " << spec.oom_exit_code << "\n";
  return out.str();
}

// Loads every *.workload file in `dir`, sorted by workload name.
inline std::vector<WorkloadSpec> load_registry(const std::filesystem::path& dir,
                                               const std::filesystem::path& synth_executable = {}) {
  if (!std::filesystem::is_directory(dir)) throw ValidationError("registry is not a directory: " + dir.string());
  std::vector<WorkloadSpec> specs;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".workload") continue;
    specs.push_back(parse_workload_spec(read_file(entry.path()), entry.path(), synth_executable));
  }
  std::sort(specs.begin(), specs.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  for (std::size_t i = 1; i < specs.size(); ++i)
    if (specs[i].name == specs[i - 1].name) throw ValidationError("duplicate workload name: " + specs[i].name);
  return specs;
}

}  // namespace benchguard
