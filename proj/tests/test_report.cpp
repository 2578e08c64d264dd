#include <regex>

#include <gtest/gtest.h>

#include "benchguard/report.hpp"
#include "benchguard/synthetic.hpp"
#include "support.hpp"

namespace bg = benchguard;
using testing_support::TempDir;

namespace {

bg::WorkloadSpec builtin(const std::string& name) { return bg::spec_for_model(*bg::find_builtin_model(name), "x"); }

std::vector<bg::MeasurementSet> measured_conv(const std::filesystem::path& traces) {
  bg::RunConfig c;
  c.repeats = 3;
  bg::MatrixOptions mo;
  mo.measure.trace_dir = traces;
  auto m = bg::run_matrix(builtin("synth-conv"), c, bg::builtin_runner(), mo);
  std::vector<bg::MeasurementSet> out;
  for (const auto& cell : m.cells)
    if (cell.measurement) out.push_back(*cell.measurement);
  return out;
}

}  // namespace

TEST(ResultDir, RoundTripAndMerge) {
  TempDir tmp;
  auto sets = measured_conv(tmp / "traces");
  ASSERT_EQ(sets.size(), 4u);
  bg::save_to_result_dir(tmp / "r", {sets[0], sets[1]});
  bg::save_to_result_dir(tmp / "r", {sets[1], sets[2], sets[3]});
  auto back = bg::load_result_dir(tmp / "r");
  ASSERT_EQ(back.size(), 4u);
  for (const auto& s : sets) {
    auto it = std::find_if(back.begin(), back.end(), [&](const auto& b) { return b.key() == s.key(); });
    ASSERT_NE(it, back.end());
    EXPECT_EQ(it->summary, s.summary);
    EXPECT_EQ(it->config.batch_size, s.config.batch_size);
    EXPECT_EQ(it->selected, s.selected);
    EXPECT_EQ(it->runs.size(), s.runs.size());
    EXPECT_EQ(it->decomposition.has_value(), s.decomposition.has_value());
    if (s.decomposition) EXPECT_NEAR(it->decomposition->active_fraction, s.decomposition->active_fraction, 1e-12);
  }
  // runs.jsonl keeps every raw run that was saved, duplicates included.
  std::ifstream in(tmp / "r" / "runs.jsonl");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) {
    auto j = nlohmann::json::parse(l);
    EXPECT_TRUE(j.contains("run_index"));
    EXPECT_TRUE(j.at("run").contains("exit_class"));
    ++lines;
  }
  EXPECT_EQ(lines, 5u * 3u);
}

TEST(ResultDir, Errors) {
  TempDir tmp;
  EXPECT_THROW(bg::load_result_dir(tmp.path()), bg::ValidationError);
  testing_support::write(tmp / "measurements.json", R"({"schema":"other/1","measurements":[]})");
  EXPECT_THROW(bg::load_result_dir(tmp.path()), bg::ParseError);
  testing_support::write(tmp / "measurements.json", "{");
  EXPECT_THROW(bg::load_result_dir(tmp.path()), bg::ParseError);
}

TEST(Schemas, DocumentsCarrySchemaStrings) {
  TempDir tmp;
  auto sets = measured_conv(tmp / "t");
  EXPECT_EQ(bg::measurements_document(sets)["schema"], "benchguard.measurements/1");
  auto cmp = bg::compare_variants(sets, sets);
  EXPECT_EQ(bg::to_json(cmp)["schema"], "benchguard.comparison/1");
  EXPECT_EQ(bg::to_json(bg::compare_platforms(sets, sets, "a", "b"))["schema"], "benchguard.platform/1");
  EXPECT_EQ(bg::to_json(bg::breakdown_report(bg::breakdown_entries(sets)))["schema"], "benchguard.breakdown/1");
  bg::ConfigMatrix m;
  m.workload = "w";
  EXPECT_EQ(bg::to_json(m)["schema"], "benchguard.matrix/1");
}

TEST(Comparison, JsonAndMarkdownAgree) {
  auto mk = [](std::int64_t wall, std::int64_t cpu, std::int64_t gpu) {
    bg::MeasurementSet s;
    s.workload = "w";
    s.config.device = bg::Device::gpu;
    s.config.batch_size = 4;
    s.summary = {wall, cpu, gpu, 0};
    return s;
  };
  auto c = bg::compare_variants({mk(1000, 100000, 3000)}, {mk(1234, 28800, 2000)}, "old", "new");
  auto j = bg::to_json(c);
  auto md = bg::render_comparison_markdown(c);
  auto row = j["rows"][0];
  for (const char* key : {"wall_time_ratio", "peak_cpu_mem_ratio", "peak_gpu_mem_ratio"})
    EXPECT_NE(md.find("| " + bg::format_fixed(row[key].get<double>(), 3) + " |"), std::string::npos) << key;
  EXPECT_EQ(row["peak_cpu_mem_change"], "−71.2%");
  EXPECT_NE(md.find("−71.2%"), std::string::npos);
  EXPECT_NE(md.find(bg::format_fixed(j["geomean"]["speedup"].get<double>(), 3) + "x"), std::string::npos);
  EXPECT_EQ(j["orientation"].get<std::string>().rfind("candidate / baseline", 0), 0u);

  auto csv = bg::render_comparison_csv(c);
  EXPECT_NE(csv.find("w,eval,gpu,1.234000,0.288000,0.666667"), std::string::npos) << csv;
}

TEST(Breakdown, MarkdownMatchesJsonAndFixtureLayout) {
  bg::BreakdownTable t;
  t.rows.push_back(bg::make_breakdown_row("Computer Vision", bg::Mode::train, 0.531, 0.021, 0.448));
  t.rows.push_back(bg::make_breakdown_row("Computer Vision", bg::Mode::eval, 0.628, 0.014, 0.357));
  t.rows.push_back(bg::make_breakdown_row("Speech", bg::Mode::eval, 0.2, 0.0, 0.8));
  auto md = bg::render_breakdown_markdown(t);
  EXPECT_NE(md.find("| Computer Vision | 53.1 | 2.1 | 44.8 | 62.8 | 1.4 | 35.7 |"), std::string::npos) << md;
  EXPECT_NE(md.find("| Speech | - | - | - | 20.0 | 0.0 | 80.0 |"), std::string::npos) << md;
  auto j = bg::to_json(t);
  EXPECT_DOUBLE_EQ(j["rows"][0]["gpu_active_pct"].get<double>(), 53.1);
  EXPECT_DOUBLE_EQ(j["rows"][0]["data_movement_pct"].get<double>(), 2.1);
  EXPECT_DOUBLE_EQ(j["rows"][0]["gpu_idle_pct"].get<double>(), 44.8);
  auto csv = bg::render_breakdown_csv(t);
  EXPECT_NE(csv.find("domain,Computer Vision,train,53.1,2.1,44.8"), std::string::npos);
}

TEST(Breakdown, FromMeasuredTraces) {
  TempDir tmp;
  auto sets = measured_conv(tmp / "t");
  auto entries = bg::breakdown_entries(sets);
  ASSERT_EQ(entries.size(), 2u);  // gpu cells only
  auto t = bg::breakdown_report(entries);
  for (const auto& r : t.rows) EXPECT_TRUE(bg::breakdown_row_sums_ok(r));
}

TEST(Findings, MarkdownShowsThresholdsAndValues) {
  bg::DetectionResult d;
  bg::RegressionFinding f;
  f.cell = {"w", bg::Mode::eval, bg::Device::gpu};
  f.metric = bg::Metric::wall_time;
  f.baseline_value = 100000;
  f.observed_value = 120000;
  f.ratio = 1.2;
  f.culprit = "abc";
  d.findings.push_back(f);
  auto md = bg::render_findings_markdown(d, {});
  EXPECT_NE(md.find("+7.0%"), std::string::npos);
  EXPECT_NE(md.find("| w/eval/gpu | wall_time | 100000 us | 120000 us | 1.200 | abc |"), std::string::npos) << md;
  auto j = bg::to_json(d);
  EXPECT_EQ(j["findings"][0]["culprit"], "abc");
  EXPECT_DOUBLE_EQ(j["findings"][0]["ratio"].get<double>(), 1.2);
  EXPECT_NE(bg::render_findings_markdown({}, {}).find("No regressions"), std::string::npos);
}

TEST(Format, HumanBytes) {
  EXPECT_EQ(bg::human_bytes(512), "512 B");
  EXPECT_EQ(bg::human_bytes(1024 * 1024), "1.0 MiB");
}
