#include "flowguard/diagnostics.hpp"

#include "flowguard/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace flowguard {

void RunningStats::push(double x) {
  n_ += 1;
  const double d = x - mean_;
  mean_ += d / static_cast<double>(n_);
  m2_ += d * (x - mean_);
}

void RunningStats::merge(const RunningStats& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  const double n = static_cast<double>(n_ + other.n_);
  const double d = other.mean_ - mean_;
  mean_ += d * static_cast<double>(other.n_) / n;
  m2_ += other.m2_ + d * d * static_cast<double>(n_) * static_cast<double>(other.n_) / n;
  n_ += other.n_;
}

double RunningStats::standard_error() const {
  if (n_ < 2) return 0.0;
  return std::sqrt(m2_ / static_cast<double>(n_ - 1) / static_cast<double>(n_));
}

void TimestepHistogram::add(double value) {
  const int nb = static_cast<int>(counts.size());
  int bin = 0;
  if (hi > lo) {
    bin = static_cast<int>(std::floor((value - lo) / (hi - lo) * nb));
  }
  counts[std::clamp(bin, 0, nb - 1)] += 1;
  stats.push(value);
}

std::int64_t TimestepHistogram::total() const {
  std::int64_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

double grad_norm_spread(std::span<const TimestepSummary> steps) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (const auto& s : steps) {
    if (s.count == 0) continue;
    lo = std::min(lo, s.grad_norm_mean);
    hi = std::max(hi, s.grad_norm_mean);
  }
  if (!(hi > 0.0)) return 1.0;
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

DiagnosticsAggregator::DiagnosticsAggregator(std::vector<double> t_grid, int bins)
    : t_grid_(std::move(t_grid)), bins_(bins), pending_zero_(t_grid_.size(), 0), total_(t_grid_.size()) {
  if (t_grid_.empty()) throw ConfigError("diagnostics: empty timestep grid");
  if (bins_ < 1) throw ConfigError("diagnostics: need at least one histogram bin");
}

std::vector<TimestepHistogram> DiagnosticsAggregator::empty_histograms() const {
  std::vector<TimestepHistogram> h(t_grid_.size());
  for (std::size_t k = 0; k < h.size(); ++k) {
    h[k].k = static_cast<int>(k);
    h[k].lo = -*range_;
    h[k].hi = *range_;
    h[k].counts.assign(bins_, 0);
  }
  return h;
}

TimestepSummary DiagnosticsAggregator::summarize(int k, const StepAccum& acc) const {
  TimestepSummary s;
  s.k = k;
  s.t = t_grid_[k];
  s.count = acc.log_r.count();
  s.mean_log_r = acc.log_r.mean();
  s.var_log_r = acc.log_r.variance();
  s.se_mean_log_r = acc.log_r.standard_error();
  if (s.count > 0) {
    s.clip_hi_frac = static_cast<double>(acc.clip_hi) / static_cast<double>(s.count);
    s.clip_lo_frac = static_cast<double>(acc.clip_lo) / static_cast<double>(s.count);
  }
  if (acc.grad_count > 0) s.grad_norm_mean = acc.grad_norm_sum / static_cast<double>(acc.grad_count);
  return s;
}

std::vector<TimestepSummary> DiagnosticsAggregator::ingest(std::span<const RatioRecord> records) {
  const int T = steps();
  std::vector<StepAccum> local(T);
  std::vector<const RatioRecord*> accepted;
  accepted.reserve(records.size());
  for (const auto& rec : records) {
    if (rec.k < 0 || rec.k >= T) {
      ++rejected_;
      continue;
    }
    auto& acc = local[rec.k];
    acc.log_r.push(rec.log_r_used);
    acc.clip_hi += rec.clipped_hi ? 1 : 0;
    acc.clip_lo += rec.clipped_lo ? 1 : 0;
    acc.grad_norm_sum += rec.grad_norm;
    acc.grad_count += 1;
    accepted.push_back(&rec);
  }
  if (accepted.empty()) return {};

  if (!range_) {
    double span = 0.0;
    for (const auto* rec : accepted) span = std::max(span, std::abs(rec->log_r_used));
    if (span > 0.0 && std::isfinite(span)) {
      range_ = span;
      hist_ = empty_histograms();
      for (int k = 0; k < T; ++k) {
        for (std::int64_t i = 0; i < pending_zero_[k]; ++i) hist_[k].add(0.0);
      }
    }
  }
  if (range_) {
    last_hist_ = empty_histograms();
    for (const auto* rec : accepted) {
      hist_[rec->k].add(rec->log_r_used);
      last_hist_[rec->k].add(rec->log_r_used);
    }
  } else {
    for (const auto* rec : accepted) pending_zero_[rec->k] += 1;
  }

  std::vector<TimestepSummary> rows;
  rows.reserve(T);
  for (int k = 0; k < T; ++k) {
    auto& tot = total_[k];
    tot.log_r.merge(local[k].log_r);
    tot.clip_hi += local[k].clip_hi;
    tot.clip_lo += local[k].clip_lo;
    tot.grad_norm_sum += local[k].grad_norm_sum;
    tot.grad_count += local[k].grad_count;
    rows.push_back(summarize(k, local[k]));
  }
  ++iterations_;
  return rows;
}

void DiagnosticsAggregator::add_curve_point(const CurvePoint& point) {
  if (!curves_.empty() && point.iteration < curves_.back().iteration) {
    throw ConfigError("diagnostics: curve iterations must be nondecreasing");
  }
  curves_.push_back(point);
}

DiagnosticsFrame DiagnosticsAggregator::summary() const {
  if (iterations_ == 0) throw DataError("no data");
  DiagnosticsFrame frame;
  for (int k = 0; k < steps(); ++k) frame.steps.push_back(summarize(k, total_[k]));
  frame.grad_norm_spread = grad_norm_spread(frame.steps);
  frame.curves = curves_;
  frame.rejected_records = rejected_;
  return frame;
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, const std::string& header) {
  std::ifstream is(path);
  if (!is) throw DataError("missing file: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw DataError("empty file: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw DataError("unexpected header in " + path.string() + ": " + line);
  const auto width = split_csv(header).size();
  std::vector<std::vector<std::string>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() != width) throw DataError("malformed row in " + path.string() + ": " + line);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

std::string format_metrics_row(int iteration, const TimestepSummary& s) {
  return std::to_string(iteration) + ',' + std::to_string(s.k) + ',' + fmt_double(s.t) + ',' +
         fmt_double(s.mean_log_r) + ',' + fmt_double(s.var_log_r) + ',' + fmt_double(s.clip_hi_frac) + ',' +
         fmt_double(s.clip_lo_frac) + ',' + fmt_double(s.grad_norm_mean);
}

std::string format_curve_row(const CurvePoint& p) {
  return std::to_string(p.iteration) + ',' + fmt_double(p.proxy_mean) + ',' + fmt_double(p.gold_composite) + ',' +
         fmt_double(p.gold_log_density) + ',' + fmt_double(p.gold_mode_coverage);
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::vector<MetricsRow> rows;
  for (const auto& c : read_csv(path, kMetricsHeader)) {
    MetricsRow r{};
    r.iteration = std::stoi(c[0]);
    r.step.k = std::stoi(c[1]);
    r.step.t = std::stod(c[2]);
    r.step.mean_log_r = std::stod(c[3]);
    r.step.var_log_r = std::stod(c[4]);
    r.step.clip_hi_frac = std::stod(c[5]);
    r.step.clip_lo_frac = std::stod(c[6]);
    r.step.grad_norm_mean = std::stod(c[7]);
    r.step.count = 1;
    rows.push_back(r);
  }
  return rows;
}

std::vector<CurvePoint> read_curves_csv(const std::filesystem::path& path) {
  std::vector<CurvePoint> out;
  for (const auto& c : read_csv(path, kCurvesHeader)) {
    out.push_back({std::stoi(c[0]), std::stod(c[1]), std::stod(c[2]), std::stod(c[3]), std::stod(c[4])});
  }
  return out;
}

DiagnosticsFrame summarize_metrics(std::span<const MetricsRow> rows, int first_iteration) {
  int max_k = -1;
  for (const auto& r : rows) {
    if (r.iteration >= first_iteration) max_k = std::max(max_k, r.step.k);
  }
  if (max_k < 0) throw DataError("no data");
  struct Pool {
    double t = 0.0;
    std::int64_t n = 0;
    RunningStats means;
    double var_sum = 0.0;
    double hi = 0.0, lo = 0.0, grad = 0.0;
  };
  std::vector<Pool> pools(max_k + 1);
  for (const auto& r : rows) {
    if (r.iteration < first_iteration || r.step.k < 0) continue;
    auto& p = pools[r.step.k];
    p.t = r.step.t;
    p.n += 1;
    p.means.push(r.step.mean_log_r);
    p.var_sum += r.step.var_log_r;
    p.hi += r.step.clip_hi_frac;
    p.lo += r.step.clip_lo_frac;
    p.grad += r.step.grad_norm_mean;
  }
  DiagnosticsFrame frame;
  for (int k = 0; k <= max_k; ++k) {
    const auto& p = pools[k];
    TimestepSummary s;
    s.k = k;
    s.t = p.t;
    s.count = p.n;
    if (p.n > 0) {
      const double n = static_cast<double>(p.n);
      s.mean_log_r = p.means.mean();
      // law of total variance over equally weighted iterations
      s.var_log_r = p.var_sum / n + p.means.variance();
      s.se_mean_log_r = p.means.standard_error();
      s.clip_hi_frac = p.hi / n;
      s.clip_lo_frac = p.lo / n;
      s.grad_norm_mean = p.grad / n;
    }
    frame.steps.push_back(s);
  }
  frame.grad_norm_spread = grad_norm_spread(frame.steps);
  return frame;
}

void write_summary_json(const DiagnosticsFrame& frame, const std::filesystem::path& path) {
  nlohmann::json j;
  j["grad_norm_spread"] = std::isfinite(frame.grad_norm_spread) ? nlohmann::json(frame.grad_norm_spread)
                                                                : nlohmann::json(nullptr);
  j["rejected_records"] = frame.rejected_records;
  auto& steps = j["timesteps"] = nlohmann::json::array();
  for (const auto& s : frame.steps) {
    steps.push_back({{"k", s.k},
                     {"t", s.t},
                     {"count", s.count},
                     {"mean_log_r", s.mean_log_r},
                     {"var_log_r", s.var_log_r},
                     {"clip_hi_frac", s.clip_hi_frac},
                     {"clip_lo_frac", s.clip_lo_frac},
                     {"grad_norm_mean", s.grad_norm_mean}});
  }
  auto& curves = j["curves"] = nlohmann::json::array();
  for (const auto& c : frame.curves) {
    curves.push_back({{"iteration", c.iteration},
                      {"proxy_mean", c.proxy_mean},
                      {"gold_composite", c.gold_composite},
                      {"gold_log_density", c.gold_log_density},
                      {"gold_mode_coverage", c.gold_mode_coverage}});
  }
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

}  // namespace flowguard
