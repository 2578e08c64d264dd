// benchguard-synth: serves the built-in synthetic workloads over the
// workload subprocess protocol.
//
//   benchguard-synth --workload synth-conv --mode eval --device gpu --bs 64 \
//       --iterations 1 --precision fp32 [--trace-out t.json]
//
// Wall time is modeled, not measured; the process sleeps for the modeled
// duration scaled by $BENCHGUARD_SYNTH_TIME_SCALE (default 1, 0 disables).
// A few fault switches exist so harness error paths can be exercised.

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "benchguard/synthetic.hpp"

namespace bg = benchguard;

int main(int argc, char** argv) {
  CLI::App app{"built-in synthetic benchmark workloads"};
  std::string workload, mode = "eval", device = "cpu", precision = "fp32", trace_out;
  std::int64_t bs = 1, iterations = 1, oom_threshold = 0, fail_with = 0, events = bg::kSyntheticTraceEvents;
  bool garbage = false, hang = false, list = false;

  app.add_option("--workload", workload, "built-in workload name");
  app.add_option("--mode", mode);
  app.add_option("--device", device);
  app.add_option("--bs", bs);
  app.add_option("--iterations", iterations);
  app.add_option("--precision", precision);
  app.add_option("--trace-out", trace_out);
  app.add_option("--trace-events", events, "events per generated trace");
  app.add_option("--oom-threshold", oom_threshold, "override the model's oom threshold");
  app.add_option("--fail-with", fail_with, "exit immediately with this status");
  app.add_flag("--garbage", garbage, "print a non-record line and exit 0");
  app.add_flag("--hang", hang, "sleep forever");
  app.add_flag("--list", list, "print the built-in models and exit");
  CLI11_PARSE(app, argc, argv);

  if (list) {
    for (const auto& m : bg::builtin_models())
      std::cout << m.name << "\t" << m.domain << "\toom>=" << m.oom_threshold << "\t" << m.description << "\n";
    return 0;
  }
  if (fail_with != 0) return static_cast<int>(fail_with);
  if (garbage) {
    std::cout << "model finished without writing a record\n";
    return 0;
  }
  if (hang) {
    for (;;) std::this_thread::sleep_for(std::chrono::seconds(60));
  }

  const auto* found = bg::find_builtin_model(workload);
  if (!found) {
    std::cerr << "unknown built-in workload '" << workload << "'\n";
    return 2;
  }
  bg::SyntheticWorkloadModel model = *found;
  if (oom_threshold > 0) model.oom_threshold = oom_threshold;

  bg::RunRequest req;
  std::int64_t run_index = 0;
  try {
    req.mode = bg::parse_mode(mode);
    req.device = bg::parse_device(device);
    req.batch_size = bs;
    req.iterations = iterations;
    req.precision = precision;
    if (const char* idx = std::getenv(bg::kRunIndexEnv)) run_index = std::stoll(idx);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  bg::SimulatedRun run;
  try {
    run = bg::simulate_run(model, req, run_index);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  if (run.exit_class == bg::ExitClass::oom) return bg::kDefaultOomExitCode;

  bg::ResultRecord rec;
  rec.metrics = run.metrics;
  if (!trace_out.empty() && req.device == bg::Device::gpu) {
    bg::write_synthetic_run_trace(model, run, bs, run_index, trace_out, events);
    rec.trace_path = trace_out;
  }

  double scale = 1.0;
  if (const char* s = std::getenv("BENCHGUARD_SYNTH_TIME_SCALE")) scale = std::atof(s);
  if (scale > 0)
    std::this_thread::sleep_for(std::chrono::microseconds(std::llround(double(run.metrics.wall_time_us) * scale)));

  std::cout << bg::format_result_record(rec) << std::endl;
  return 0;
}
