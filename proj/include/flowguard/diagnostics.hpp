#pragma once

#include "flowguard/grpo.hpp"
#include "flowguard/ratio.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flowguard {

// Welford accumulator; merge() combines partial aggregates exactly.
class RunningStats {
 public:
  void push(double x);
  void merge(const RunningStats& other);
  std::int64_t count() const { return n_; }
  double mean() const { return mean_; }
  // population variance
  double variance() const { return n_ > 0 ? m2_ / static_cast<double>(n_) : 0.0; }
  double standard_error() const;

 private:
  std::int64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct TimestepHistogram {
  int k = 0;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::int64_t> counts;
  RunningStats stats;

  double bin_left(int bin) const { return lo + (hi - lo) * bin / static_cast<double>(counts.size()); }
  // Values outside [lo, hi) land in the edge bins.
  void add(double value);
  std::int64_t total() const;
};

struct ClipFractionRow {
  int k = 0;
  double hi_frac = 0.0;
  double lo_frac = 0.0;
  std::int64_t count = 0;
};

struct CurvePoint {
  int iteration = 0;
  double proxy_mean = 0.0;
  double gold_composite = 0.0;
  double gold_log_density = 0.0;
  double gold_mode_coverage = 0.0;
};

struct TimestepSummary {
  int k = 0;
  double t = 0.0;
  std::int64_t count = 0;
  double mean_log_r = 0.0;
  double var_log_r = 0.0;
  double se_mean_log_r = 0.0;
  double clip_hi_frac = 0.0;
  double clip_lo_frac = 0.0;
  double grad_norm_mean = 0.0;
};

struct DiagnosticsFrame {
  std::vector<TimestepSummary> steps;
  double grad_norm_spread = 0.0;  // max_k / min_k of grad_norm_mean
  std::vector<CurvePoint> curves;
  std::int64_t rejected_records = 0;
};

// max/min of the per-timestep gradient norm means.
double grad_norm_spread(std::span<const TimestepSummary> steps);

class DiagnosticsAggregator {
 public:
  DiagnosticsAggregator(std::vector<double> t_grid, int bins = 64);

  // Adds one iteration's records. Returns the per-timestep rows for that
  // iteration alone (the metrics.csv rows). Records with k out of range are
  // rejected and counted.
  std::vector<TimestepSummary> ingest(std::span<const RatioRecord> records);
  void add_curve_point(const CurvePoint& point);

  // Throws DataError when nothing has been ingested.
  DiagnosticsFrame summary() const;

  int steps() const { return static_cast<int>(t_grid_.size()); }
  bool has_histogram_range() const { return range_.has_value(); }
  const std::vector<TimestepHistogram>& histograms() const { return hist_; }
  // Histograms of the last ingested iteration (empty until the range is set).
  const std::vector<TimestepHistogram>& last_iteration_histograms() const { return last_hist_; }
  std::int64_t rejected() const { return rejected_; }
  int iterations_ingested() const { return iterations_; }

 private:
  struct StepAccum {
    RunningStats log_r;
    std::int64_t clip_hi = 0;
    std::int64_t clip_lo = 0;
    double grad_norm_sum = 0.0;
    std::int64_t grad_count = 0;
  };

  TimestepSummary summarize(int k, const StepAccum& acc) const;
  std::vector<TimestepHistogram> empty_histograms() const;

  std::vector<double> t_grid_;
  int bins_;
  std::optional<double> range_;
  std::vector<std::int64_t> pending_zero_;  // values seen before the range was fixed (all 0)
  std::vector<StepAccum> total_;
  std::vector<TimestepHistogram> hist_;
  std::vector<TimestepHistogram> last_hist_;
  std::vector<CurvePoint> curves_;
  std::int64_t rejected_ = 0;
  int iterations_ = 0;
};

// ---- CSV / JSON artifacts -------------------------------------------------

inline constexpr const char* kMetricsHeader =
    "iteration,k,t,mean_log_r,var_log_r,clip_hi_frac,clip_lo_frac,grad_norm_mean";
inline constexpr const char* kCurvesHeader =
    "iteration,proxy_mean,gold_composite,gold_log_density,gold_mode_coverage";
inline constexpr const char* kHistogramsHeader = "iteration,k,bin_left,count";

struct MetricsRow {
  int iteration;
  TimestepSummary step;
};

std::string format_metrics_row(int iteration, const TimestepSummary& s);
std::string format_curve_row(const CurvePoint& p);

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);
std::vector<CurvePoint> read_curves_csv(const std::filesystem::path& path);

// Pools metrics rows with iteration >= first_iteration (equal weight per
// iteration). Throws DataError when no row qualifies.
DiagnosticsFrame summarize_metrics(std::span<const MetricsRow> rows, int first_iteration = 0);

void write_summary_json(const DiagnosticsFrame& frame, const std::filesystem::path& path);

}  // namespace flowguard
