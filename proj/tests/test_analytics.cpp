#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "benchguard/analytics.hpp"
#include "benchguard/report.hpp"

namespace bg = benchguard;

namespace {

bg::MeasurementSet set_of(const std::string& w, bg::Mode m, bg::Device d, std::int64_t wall, std::int64_t cpu,
                          std::int64_t gpu) {
  bg::MeasurementSet s;
  s.workload = w;
  s.domain = "test";
  s.config.mode = m;
  s.config.device = d;
  s.config.batch_size = 1;
  s.config.repeats = 1;
  bg::RunResult r;
  r.exit_class = bg::ExitClass::ok;
  r.metrics = {wall, cpu, gpu, 0};
  s.runs = {r};
  s.selected = 0;
  s.summary = r.metrics;
  return s;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST(Geomean, Examples) {
  EXPECT_DOUBLE_EQ(bg::geomean({2.0, 0.5}), 1.0);
  EXPECT_NEAR(bg::geomean({1.2, 1.5, 1.3}), std::cbrt(1.2 * 1.5 * 1.3), 1e-12);
  EXPECT_NEAR(bg::geomean({1.2, 1.5, 1.3}), 1.3277, 1e-3);
  EXPECT_THROW(bg::geomean(std::vector<double>{}), bg::ValidationError);
  EXPECT_THROW(bg::geomean({1.0, 0.0}), bg::ValidationError);
  EXPECT_THROW(bg::geomean({1.0, -2.0}), bg::ValidationError);
}

TEST(Geomean, NoOverflowInLogSpace) {
  std::vector<double> big(400, 1e300);
  EXPECT_NEAR(bg::geomean(big) / 1e300, 1.0, 1e-9);
}

TEST(Geomean, AlgebraicProperties) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> logu(-5.0, 5.0);
  for (int trial = 0; trial < 1000; ++trial) {
    auto n = std::uniform_int_distribution<int>(1, 20)(rng);
    std::vector<double> a, b, scaled, ratios;
    double c = std::exp(logu(rng));
    for (int i = 0; i < n; ++i) {
      a.push_back(std::exp(logu(rng)));
      b.push_back(std::exp(logu(rng)));
      scaled.push_back(a.back() * c);
      ratios.push_back(a.back() / b.back());
    }
    EXPECT_LE(rel(bg::geomean(scaled), c * bg::geomean(a)), 1e-12);
    EXPECT_LE(rel(bg::geomean(ratios), bg::geomean(a) / bg::geomean(b)), 1e-9);
    double x = std::exp(logu(rng)), y = std::exp(logu(rng));
    EXPECT_LE(std::abs(bg::speedup_ratio(x, y) * bg::speedup_ratio(y, x) - 1.0), 1e-12);
  }
}

TEST(SpeedupRatio, Examples) {
  EXPECT_EQ(bg::speedup_ratio(100, 100), 1.0);
  EXPECT_EQ(bg::speedup_ratio(50, 100), 0.5);
  EXPECT_THROW(bg::speedup_ratio(100, 0), bg::ValidationError);
}

TEST(Format, PercentChange) {
  EXPECT_EQ(bg::format_percent_change(28800.0 / 100000.0), "−71.2%");
  EXPECT_EQ(bg::format_percent_change(1.312), "+31.2%");
  EXPECT_EQ(bg::format_percent_change(1.0), "0.0%");
  EXPECT_EQ(bg::format_percent_change(0.99996), "0.0%");
  EXPECT_EQ(bg::format_fixed(-0.0001, 3), "0.000");
}

TEST(CompareVariants, IdenticalSidesGiveUnitRatios) {
  std::vector<bg::MeasurementSet> s = {set_of("a", bg::Mode::train, bg::Device::gpu, 100, 10, 20),
                                       set_of("b", bg::Mode::eval, bg::Device::cpu, 300, 30, 0)};
  auto c = bg::compare_variants(s, s);
  ASSERT_EQ(c.rows.size(), 2u);
  for (const auto& r : c.rows) {
    EXPECT_EQ(r.wall_time, 1.0);
    EXPECT_EQ(r.peak_cpu_mem, 1.0);
  }
  EXPECT_EQ(c.geomean_wall_time, 1.0);
  EXPECT_EQ(c.geomean_peak_cpu_mem, 1.0);
  EXPECT_EQ(c.geomean_peak_gpu_mem, 1.0);
  EXPECT_FALSE(c.rows[1].peak_gpu_mem);  // cpu cell: both sides zero
}

TEST(CompareVariants, MemoryReductionRendering) {
  auto c = bg::compare_variants({set_of("a", bg::Mode::train, bg::Device::gpu, 100, 100000, 1000)},
                                {set_of("a", bg::Mode::train, bg::Device::gpu, 80, 28800, 1312)});
  EXPECT_NEAR(c.rows[0].peak_cpu_mem, 0.288, 1e-12);
  EXPECT_EQ(bg::format_percent_change(c.rows[0].peak_cpu_mem), "−71.2%");
  EXPECT_EQ(bg::format_percent_change(*c.rows[0].peak_gpu_mem), "+31.2%");
  auto md = bg::render_comparison_markdown(c);
  EXPECT_NE(md.find("−71.2%"), std::string::npos);
  EXPECT_NE(md.find("<1 means"), std::string::npos);
}

TEST(CompareVariants, CoverageExcludedFromGeomean) {
  std::vector<bg::MeasurementSet> base = {set_of("a", bg::Mode::eval, bg::Device::cpu, 100, 10, 0),
                                          set_of("w", bg::Mode::eval, bg::Device::cpu, 100, 10, 0)};
  std::vector<bg::MeasurementSet> cand = {set_of("a", bg::Mode::eval, bg::Device::cpu, 50, 10, 0),
                                          set_of("z", bg::Mode::eval, bg::Device::cpu, 999, 10, 0)};
  auto c = bg::compare_variants(base, cand);
  ASSERT_EQ(c.rows.size(), 1u);
  EXPECT_EQ(c.geomean_wall_time, 0.5);
  ASSERT_EQ(c.only_in_baseline.size(), 1u);
  EXPECT_EQ(c.only_in_baseline[0].workload, "w");
  ASSERT_EQ(c.only_in_candidate.size(), 1u);
  EXPECT_EQ(c.only_in_candidate[0].workload, "z");
  EXPECT_FALSE(c.geomean_peak_gpu_mem);
}

TEST(CompareVariants, Errors) {
  auto a = set_of("a", bg::Mode::eval, bg::Device::cpu, 100, 10, 0);
  auto b = set_of("b", bg::Mode::eval, bg::Device::cpu, 100, 10, 0);
  EXPECT_THROW(bg::compare_variants({a}, {b}), bg::ComparisonError);
  EXPECT_THROW(bg::compare_variants({}, {b}), bg::ValidationError);
  EXPECT_THROW(bg::compare_variants({a, a}, {a}), bg::ValidationError);
  auto g0 = set_of("a", bg::Mode::eval, bg::Device::gpu, 100, 10, 0);
  auto g1 = set_of("a", bg::Mode::eval, bg::Device::gpu, 100, 10, 5);
  EXPECT_THROW(bg::compare_variants({g0}, {g1}), bg::ComparisonError);
}

TEST(CompareVariants, MeanSpeedupForMeanModeSets) {
  auto mk = [](std::vector<std::int64_t> walls) {
    auto s = set_of("a", bg::Mode::eval, bg::Device::cpu, 1, 1, 0);
    s.config.reduction = bg::Reduction::arithmetic_mean;
    s.runs.clear();
    for (auto w : walls) {
      bg::RunResult r;
      r.exit_class = bg::ExitClass::ok;
      r.metrics = {w, 1, 0, 0};
      s.runs.push_back(r);
    }
    s.summary = bg::mean_metrics(s.runs, s.ok_indices());
    return s;
  };
  auto c = bg::compare_variants({mk({100, 200})}, {mk({50, 50})});
  ASSERT_TRUE(c.rows[0].mean_speedup);
  EXPECT_DOUBLE_EQ(*c.rows[0].mean_speedup, 3.0);  // (2 + 4) / 2
}

TEST(ComparePlatforms, RatioAndConvention) {
  std::vector<bg::MeasurementSet> a = {set_of("x", bg::Mode::train, bg::Device::gpu, 50, 1, 1),
                                       set_of("y", bg::Mode::train, bg::Device::gpu, 200, 1, 1),
                                       set_of("x", bg::Mode::eval, bg::Device::gpu, 30, 1, 1)};
  std::vector<bg::MeasurementSet> b = {set_of("x", bg::Mode::train, bg::Device::gpu, 100, 1, 1),
                                       set_of("y", bg::Mode::train, bg::Device::gpu, 100, 1, 1),
                                       set_of("x", bg::Mode::eval, bg::Device::gpu, 60, 1, 1)};
  auto p = bg::compare_platforms(a, b, "A100", "MI210");
  ASSERT_EQ(p.rows.size(), 3u);
  EXPECT_DOUBLE_EQ(p.geomean_by_mode.at(bg::Mode::train), 1.0);
  EXPECT_DOUBLE_EQ(p.geomean_by_mode.at(bg::Mode::eval), 0.5);
  EXPECT_NE(p.convention().find("T_A100 / T_MI210"), std::string::npos);
  EXPECT_NE(p.convention().find("<1 means A100 performs better"), std::string::npos);
  EXPECT_NE(bg::render_platform_markdown(p).find(p.convention()), std::string::npos);
}

TEST(Breakdown, SingleRows) {
  auto t = bg::breakdown_report({{"w", "d", bg::Mode::train, bg::Decomposition::from_fractions(0, 0, 1)}});
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].active_pct, 0.0);
  EXPECT_EQ(t.rows[0].idle_pct, 100.0);

  auto t2 = bg::breakdown_report({{"w", "d", bg::Mode::eval, bg::Decomposition::from_fractions(0.5, 0.2, 0.3)}});
  EXPECT_EQ(t2.rows[0].active_pct, 50.0);
  EXPECT_EQ(t2.rows[0].movement_pct, 20.0);
  EXPECT_EQ(t2.rows[0].idle_pct, 30.0);
  EXPECT_THROW(bg::breakdown_report({}), bg::ValidationError);
}

TEST(Breakdown, ArithmeticMeanPerDomainAndMode) {
  std::vector<bg::BreakdownEntry> e = {
      {"a", "cv", bg::Mode::train, bg::Decomposition::from_fractions(0.6, 0.1, 0.3)},
      {"b", "cv", bg::Mode::train, bg::Decomposition::from_fractions(0.2, 0.0, 0.8)},
      {"a", "cv", bg::Mode::eval, bg::Decomposition::from_fractions(0.9, 0.0, 0.1)},
      {"c", "nlp", bg::Mode::train, bg::Decomposition::from_fractions(1.0, 0.0, 0.0)},
  };
  auto t = bg::breakdown_report(e);
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[0].domain, "cv");
  EXPECT_EQ(t.rows[0].mode, bg::Mode::train);
  EXPECT_EQ(t.rows[0].active_pct, 40.0);
  EXPECT_EQ(t.rows[0].movement_pct, 5.0);
  EXPECT_EQ(t.rows[0].idle_pct, 55.0);
  EXPECT_EQ(t.rows[0].workloads, 2u);
  EXPECT_EQ(t.per_workload.size(), 4u);
}

TEST(Breakdown, RowsSumToHundredAfterRounding) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<bg::BreakdownEntry> entries;
  const char* domains[] = {"cv", "nlp", "rec", "rl", "speech"};
  for (int i = 0; i < 400; ++i) {
    double a = u(rng), m = u(rng) * (1 - a);
    entries.push_back({"w" + std::to_string(i), domains[i % 5], i % 2 ? bg::Mode::train : bg::Mode::eval,
                       bg::Decomposition::from_fractions(a, m, 1 - a - m)});
  }
  auto t = bg::breakdown_report(entries);
  for (const auto& r : t.rows) EXPECT_TRUE(bg::breakdown_row_sums_ok(r)) << r.sum();
  for (const auto& r : t.per_workload) EXPECT_TRUE(bg::breakdown_row_sums_ok(r)) << r.sum();
}

TEST(Breakdown, TableLayoutFixture) {
  bg::BreakdownTable t;
  t.rows.push_back({"Computer Vision", bg::Mode::train, 53.1, 2.1, 44.8, 1});
  EXPECT_TRUE(bg::breakdown_row_sums_ok(t.rows[0]));
  auto md = bg::render_breakdown_markdown(t);
  EXPECT_NE(md.find("| Task | Train GPU activeness | Train Data movement | Train GPU idleness | Inference GPU activeness "
                    "| Inference Data movement | Inference GPU idleness |"),
            std::string::npos);
  EXPECT_NE(md.find("| Computer Vision | 53.1 | 2.1 | 44.8 | - | - | - |"), std::string::npos);
  EXPECT_NE(md.find("arithmetic means"), std::string::npos);
}
