#include "doctest.h"
#include "helpers.hpp"

#include "flowguard/diagnostics.hpp"
#include "flowguard/errors.hpp"

#include <cmath>
#include <fstream>
#include <string>

using namespace flowguard;

namespace {

RatioRecord record(int k, double log_r, double grad_norm = 1.0) {
  RatioRecord r;
  r.k = k;
  r.log_r_used = log_r;
  r.r_used = std::exp(log_r);
  r.grad_norm = grad_norm;
  return r;
}

std::string first_line(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::string line;
  std::getline(is, line);
  return line;
}

}  // namespace

TEST_SUITE("diagnostics") {
  TEST_CASE("constant values have zero variance") {
    RunningStats s;
    for (int i = 0; i < 1000; ++i) s.push(0.37);
    CHECK(s.mean() == doctest::Approx(0.37).epsilon(1e-15));
    CHECK(s.variance() == doctest::Approx(0.0));
    CHECK(s.variance() >= 0.0);
  }

  TEST_CASE("streaming and merged moments match a two-pass computation") {
    Rng rng = make_stream({1});
    std::vector<double> xs;
    for (int i = 0; i < 10000; ++i) xs.push_back(1e3 + standard_normal(rng, 1)[0]);
    RunningStats whole, left, right;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      whole.push(xs[i]);
      (i < 3000 ? left : right).push(xs[i]);
    }
    left.merge(right);
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    CHECK(std::abs(whole.mean() - mean) <= 1e-10 * std::abs(mean));
    CHECK(std::abs(whole.variance() - var) <= 1e-10 * var);
    CHECK(std::abs(left.mean() - mean) <= 1e-10 * std::abs(mean));
    CHECK(std::abs(left.variance() - var) <= 1e-10 * var);
  }

  TEST_CASE("histogram mass is conserved") {
    DiagnosticsAggregator agg({0.9, 0.5, 0.1}, 16);
    Rng rng = make_stream({2});
    std::vector<RatioRecord> recs;
    for (int i = 0; i < 300; ++i) recs.push_back(record(i % 3, 0.1 * standard_normal(rng, 1)[0]));
    agg.ingest(recs);
    agg.ingest(recs);
    REQUIRE(agg.has_histogram_range());
    for (const auto& h : agg.histograms()) CHECK(h.total() == 200);
  }

  TEST_CASE("empty iteration leaves aggregates unchanged and out-of-range steps are rejected") {
    DiagnosticsAggregator agg({0.9, 0.1});
    CHECK(agg.ingest({}).empty());
    CHECK(agg.iterations_ingested() == 0);
    CHECK_THROWS_AS(agg.summary(), DataError);
    std::vector<RatioRecord> bad = {record(2, 0.1), record(-1, 0.1)};
    agg.ingest(bad);
    CHECK(agg.rejected() == 2);
    CHECK(agg.iterations_ingested() == 0);
  }

  TEST_CASE("zero mean difference gives zero clip fractions") {
    DiagnosticsAggregator agg({0.9, 0.5, 0.1});
    std::vector<RatioRecord> recs;
    for (int i = 0; i < 30; ++i) recs.push_back(record(i % 3, 0.0));
    agg.ingest(recs);
    for (const auto& s : agg.summary().steps) {
      CHECK(s.clip_hi_frac == 0.0);
      CHECK(s.clip_lo_frac == 0.0);
      CHECK(s.var_log_r == 0.0);
    }
  }

  TEST_CASE("spread is max over min of per-step gradient norms") {
    DiagnosticsAggregator agg({0.9, 0.5, 0.1});
    std::vector<RatioRecord> recs = {record(0, 0.1, 2.0), record(1, 0.1, 10.0), record(2, 0.1, 4.0)};
    agg.ingest(recs);
    CHECK(agg.summary().grad_norm_spread == doctest::Approx(5.0));
  }

  TEST_CASE("curve points must not go backwards") {
    DiagnosticsAggregator agg({0.5});
    agg.add_curve_point({0, 0.1, 1.0, -2.0, 1.0});
    agg.add_curve_point({10, 0.2, 0.9, -2.1, 1.0});
    CHECK_THROWS_AS(agg.add_curve_point({5, 0.2, 0.9, -2.1, 1.0}), ConfigError);
  }

  TEST_CASE("csv headers are fixed and rows round-trip") {
    const auto dir = fgtest::scratch_dir("diag_csv");
    CHECK(std::string(kMetricsHeader) ==
          "iteration,k,t,mean_log_r,var_log_r,clip_hi_frac,clip_lo_frac,grad_norm_mean");
    CHECK(std::string(kCurvesHeader) == "iteration,proxy_mean,gold_composite,gold_log_density,gold_mode_coverage");
    CHECK(std::string(kHistogramsHeader) == "iteration,k,bin_left,count");

    TimestepSummary s;
    s.k = 3;
    s.t = 0.625;
    s.mean_log_r = -1.25e-7;
    s.var_log_r = 3.5e-9;
    s.clip_hi_frac = 0.125;
    s.clip_lo_frac = 0.0625;
    s.grad_norm_mean = 0.75;
    {
      std::ofstream os(dir / "metrics.csv");
      os << kMetricsHeader << '\n' << format_metrics_row(7, s) << '\n';
    }
    CHECK(first_line(dir / "metrics.csv") == kMetricsHeader);
    const auto rows = read_metrics_csv(dir / "metrics.csv");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].iteration == 7);
    CHECK(rows[0].step.k == 3);
    CHECK(rows[0].step.mean_log_r == doctest::Approx(s.mean_log_r).epsilon(1e-12));
    CHECK(rows[0].step.clip_lo_frac == doctest::Approx(0.0625));

    const CurvePoint p{20, 0.012, 0.93, -2.5, 0.875};
    {
      std::ofstream os(dir / "curves.csv");
      os << kCurvesHeader << '\n' << format_curve_row(p) << '\n';
    }
    const auto curves = read_curves_csv(dir / "curves.csv");
    REQUIRE(curves.size() == 1);
    CHECK(curves[0].iteration == 20);
    CHECK(curves[0].gold_composite == doctest::Approx(0.93));
  }

  TEST_CASE("summarizing nothing is a data error") {
    const auto dir = fgtest::scratch_dir("diag_empty");
    CHECK_THROWS_AS(read_metrics_csv(dir / "metrics.csv"), DataError);
    {
      std::ofstream os(dir / "metrics.csv");
      os << kMetricsHeader << '\n';
    }
    const auto rows = read_metrics_csv(dir / "metrics.csv");
    CHECK(rows.empty());
    CHECK_THROWS_AS(summarize_metrics(rows), DataError);
  }
}
