// Acceptance suite: one PASS/FAIL line per criterion. Runs its own pretrain
// and RL runs under a scratch run root, with the built-in default config.

#include "flowguard/config.hpp"
#include "flowguard/diagnostics.hpp"
#include "flowguard/grpo.hpp"
#include "flowguard/run.hpp"
#include "oracle/checks.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace flowguard;

namespace {

constexpr std::uint64_t kSeed = 20251028;

struct Line {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void emit(const Line& line) {
  std::printf("%s %s: %s\n", line.passed ? "PASS" : "FAIL", line.name.c_str(), line.detail.c_str());
  std::fflush(stdout);
}

Line from_check(const std::string& name, const oracle::CheckResult& r) { return {name, r.passed, r.detail}; }

Line closed_form() {
  const auto start = std::chrono::steady_clock::now();
  const auto r = oracle::check_closed_form(kSeed, 10000, 1e-9);
  const double secs = seconds_since(start);
  return {"closed_form_equivalence", r.passed && secs < 5.0, fmt("%s; %.3f s (budget 5 s)", r.detail.c_str(), secs)};
}

Line gradient_scale_law(const NoiseSchedule& schedule) {
  const auto rows = oracle::check_gradient_scale_rows(kSeed, schedule, 0.0, 200, 1e-6);
  const auto fd = oracle::check_policy_fd(kSeed + 1, schedule, 0.0, 40, 1e-4);
  return {"gradient_scale_law", rows.passed && fd.passed, rows.detail + "; " + fd.detail};
}

// Per-timestep mean |dJ/dv| over the first (on-policy) pass of one iteration
// from `params`, for a variant.
DiagnosticsFrame frozen_iteration(const NetParams& params, const RunConfig& config, VariantKind kind) {
  RunConfig cfg = config;
  cfg.rl.rl.variant.kind = kind;
  RLConfig rl = cfg.resolved_rl();
  rl.inner_epochs = 1;
  const Environment env = make_environment(cfg);
  TrainerState state = TrainerState::from(params);
  const auto result = train_iteration(state, rl, proxy_fn(env), condition_fn(cfg, env));
  std::vector<double> t_grid;
  for (const auto& g : rl.build().grid) t_grid.push_back(g.t);
  DiagnosticsAggregator agg(t_grid);
  agg.ingest(result.records);
  return agg.summary();
}

Line spread_ordering(const NetParams& params, const RunConfig& config) {
  const NoiseSchedule schedule = config.resolved_rl().build();
  double lo = INFINITY;
  double hi = 0.0;
  for (const auto& g : schedule.grid) {
    const double s = std::sqrt(g.dt) / g.sigma;
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  const double analytic_baseline = hi / lo;
  const double analytic_guard = 1.0;

  const double base = frozen_iteration(params, config, VariantKind::baseline).grad_norm_spread;
  const double norm = frozen_iteration(params, config, VariantKind::rationorm).grad_norm_spread;
  const double guard = frozen_iteration(params, config, VariantKind::grpo_guard).grad_norm_spread;

  const bool analytic_ok = analytic_baseline > analytic_guard;
  const bool order_ok = base > norm && norm > guard;
  const bool guard_ok = guard <= 3.0;
  return {"gradient_spread_ordering", analytic_ok && order_ok && guard_ok,
          fmt("analytic baseline %.4g > guard %.4g [%s]; measured baseline %.6g, rationorm %.6g, grpo_guard %.6g, "
              "need baseline > rationorm > grpo_guard [%s]; grpo_guard <= 3 [%s]",
              analytic_baseline, analytic_guard, analytic_ok ? "ok" : "no", base, norm, guard,
              order_ok ? "ok" : "no", guard_ok ? "ok" : "no")};
}

RLRunOutcome train(const RunConfig& base, VariantKind kind, int iterations, std::uint64_t seed, const fs::path& dir) {
  RunConfig cfg = base;
  cfg.rl.rl.variant.kind = kind;
  cfg.rl.rl.iterations = iterations;
  cfg.rl.rl.seed = seed;
  RLRunOptions opts;
  opts.run_dir = dir;
  return run_rl_train(cfg, opts);
}

Line clip_symmetry(const RunConfig& config, const fs::path& root) {
  const auto guard = train(config, VariantKind::grpo_guard, 100, 0, root / "clip_grpo_guard");
  const auto base = train(config, VariantKind::baseline, 100, 0, root / "clip_baseline");
  const auto& gs = guard.summary->steps;
  const auto& bs = base.summary->steps;

  double worst = 0.0;
  int worst_k = 0;
  for (const auto& s : gs) {
    const double gap = std::abs(s.clip_hi_frac - s.clip_lo_frac);
    if (gap > worst) {
      worst = gap;
      worst_k = s.k;
    }
  }
  // noise level sigma sqrt(dt) per step
  const NoiseSchedule schedule = config.resolved_rl().build();
  int noisiest = 0;
  int quietest = 0;
  for (int k = 0; k < static_cast<int>(schedule.grid.size()); ++k) {
    const auto& g = schedule.grid[static_cast<std::size_t>(k)];
    const auto level = [&](int j) {
      const auto& h = schedule.grid[static_cast<std::size_t>(j)];
      return h.sigma * std::sqrt(h.dt);
    };
    if (g.sigma * std::sqrt(g.dt) > level(noisiest)) noisiest = k;
    if (g.sigma * std::sqrt(g.dt) < level(quietest)) quietest = k;
  }
  const double hi_noisy = bs[static_cast<std::size_t>(noisiest)].clip_hi_frac;
  const double lo_quiet = bs[static_cast<std::size_t>(quietest)].clip_lo_frac;
  const bool guard_ok = worst <= 0.1;
  const bool base_ok = hi_noisy <= 0.01 && lo_quiet > 0.0;
  return {"clip_fraction_symmetry", guard_ok && base_ok,
          fmt("grpo_guard max |hi-lo| %.4f at k=%d (<= 0.1) [%s]; baseline clip_hi %.4f at k=%d (<= 0.01), "
              "clip_lo %.4f at k=%d (> 0) [%s]; clip ranges %.3g / %.3g",
              worst, worst_k, guard_ok ? "ok" : "no", hi_noisy, noisiest, lo_quiet, quietest, base_ok ? "ok" : "no",
              guard.clip_range, base.clip_range)};
}

struct CurveSummary {
  double proxy_initial = 0.0;
  double proxy_final = 0.0;  // mean over the last 10% of iterations
  double gold_initial = 0.0;
  double gold_final = 0.0;
};

CurveSummary summarize_curve(const std::vector<CurvePoint>& curves, int iterations) {
  CurveSummary s;
  s.proxy_initial = curves.front().proxy_mean;
  s.gold_initial = curves.front().gold_composite;
  s.gold_final = curves.back().gold_composite;
  const int from = iterations - iterations / 10;
  double sum = 0.0;
  int n = 0;
  for (const auto& p : curves) {
    if (p.iteration >= from) {
      sum += p.proxy_mean;
      ++n;
    }
  }
  s.proxy_final = n > 0 ? sum / n : curves.back().proxy_mean;
  return s;
}

Line end_to_end(const RunConfig& config, const fs::path& root, int seeds, int iterations) {
  int passed = 0;
  double slowest = 0.0;
  std::ostringstream detail;
  for (int seed = 0; seed < seeds; ++seed) {
    auto start = std::chrono::steady_clock::now();
    const auto b = train(config, VariantKind::baseline, iterations, static_cast<std::uint64_t>(seed),
                         root / fmt("e2e_baseline_s%d", seed));
    slowest = std::max(slowest, seconds_since(start));
    start = std::chrono::steady_clock::now();
    const auto g = train(config, VariantKind::grpo_guard, iterations, static_cast<std::uint64_t>(seed),
                         root / fmt("e2e_grpo_guard_s%d", seed));
    slowest = std::max(slowest, seconds_since(start));

    const auto bs = summarize_curve(b.curves, iterations);
    const auto gs = summarize_curve(g.curves, iterations);
    const double b_gold = bs.gold_final / bs.gold_initial;
    const double g_gold = gs.gold_final / gs.gold_initial;
    const bool base_hacks = b_gold < 0.8 && bs.proxy_final > bs.proxy_initial;
    const bool proxy_close = gs.proxy_final >= 0.9 * bs.proxy_final;
    const bool guard_gold = g_gold >= 0.95;
    const bool ok = base_hacks && proxy_close && guard_gold;
    passed += ok ? 1 : 0;
    const double gap = std::abs(gs.proxy_final - bs.proxy_final) / bs.proxy_final;
    detail << fmt("seed %d %s: baseline proxy %.4g->%.4g gold x%.3f; grpo_guard proxy %.4g (%.0f%% of baseline, "
                  "gap %.0f%%) gold x%.3f; ",
                  seed, ok ? "ok" : "no", bs.proxy_initial, bs.proxy_final, b_gold, gs.proxy_final,
                  100.0 * gs.proxy_final / bs.proxy_final, 100.0 * gap, g_gold);
  }
  const bool budget = slowest < 1800.0;
  detail << fmt("%d/%d seeds (need >= 2); slowest run %.1f s (budget 1800 s)", passed, seeds, slowest);
  return {"end_to_end_overoptimization", passed >= 2 && budget, detail.str()};
}

std::string slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

Line determinism(const RunConfig& config, const fs::path& root) {
  RunConfig cfg = config;
  cfg.threads = 1;
  bool same = true;
  std::ostringstream detail;
  for (auto kind : {VariantKind::baseline, VariantKind::grpo_guard}) {
    const std::string name(to_string(kind));
    train(cfg, kind, 25, 7, root / ("det_a_" + name));
    train(cfg, kind, 25, 7, root / ("det_b_" + name));
    const auto a = slurp(root / ("det_a_" + name) / "metrics.csv");
    const auto b = slurp(root / ("det_b_" + name) / "metrics.csv");
    const bool eq = !a.empty() && a == b;
    same = same && eq;
    detail << fmt("%s metrics.csv %zu bytes %s; ", name.c_str(), a.size(), eq ? "identical" : "DIFFER");
  }
  detail << "25 iterations, seed 7, threads 1";
  return {"determinism", same, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowguard acceptance suite"};
  std::string work_dir;
  int seeds = 3;
  int iterations = 300;
  app.add_option("--work-dir", work_dir, "scratch run root (default: a fresh temp directory)");
  app.add_option("--seeds", seeds, "seeds for the end-to-end experiment")->check(CLI::PositiveNumber);
  app.add_option("--iters", iterations, "iterations for the end-to-end experiment")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const fs::path root = work_dir.empty() ? fs::temp_directory_path() / "flowguard_acceptance" : fs::path(work_dir);
  fs::remove_all(root);
  fs::create_directories(root);
  ::setenv("FLOWGUARD_RUN_ROOT", root.c_str(), 1);

  RunConfig config;
  config.run_root = root.string();
  config.threads = 1;
  config.validate();
  const NoiseSchedule schedule = config.resolved_rl().build();

  std::vector<Line> lines;
  auto record = [&](Line line) {
    emit(line);
    lines.push_back(std::move(line));
  };

  record(closed_form());
  record(from_check("ratio_moments_law", oracle::check_ratio_moments(kSeed, 100000)));
  record(from_check("rationorm_law", oracle::check_rationorm(kSeed, schedule, 100000)));
  record(gradient_scale_law(schedule));

  int failed_runs = 0;
  try {
    const auto start = std::chrono::steady_clock::now();
    const auto pre = run_pretrain(config, pretrained_checkpoint_path(config));
    std::fprintf(stderr, "pretrained in %.1f s\n", seconds_since(start));
    record(spread_ordering(pre.params, config));
    record(clip_symmetry(config, root));
    record(end_to_end(config, root, seeds, iterations));
    record(determinism(config, root));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance run aborted: %s\n", e.what());
    ++failed_runs;
  }

  const auto passed = std::count_if(lines.begin(), lines.end(), [](const Line& l) { return l.passed; });
  std::printf("%td/%zu criteria passed\n", passed, lines.size());
  return (passed == static_cast<std::ptrdiff_t>(lines.size()) && failed_runs == 0 && lines.size() == 8) ? 0 : 1;
}
