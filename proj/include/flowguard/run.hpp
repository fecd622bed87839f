#pragma once

// Run-level orchestration shared by the CLI and the Python module.
//
// Run directory layout:
//   config.json       resolved configuration snapshot
//   metrics.csv       one row per iteration per timestep
//   curves.csv        proxy / gold evaluation points (iteration 0 = start)
//   histograms.csv    per-timestep log-ratio histograms, every N iterations
//   checkpoints/      periodic checkpoints, final.bin at the end
//   summary.json      per-timestep aggregates over the whole run

#include "flowguard/config.hpp"
#include "flowguard/diagnostics.hpp"
#include "flowguard/rewards.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

namespace flowguard {

using LogFn = std::function<void(const std::string&)>;

struct PretrainOutcome {
  NetParams params;
  std::vector<double> losses;
};

// Trains the base velocity model and writes `checkpoint` plus, when
// `metrics_csv` is non-empty, a step,loss CSV.
PretrainOutcome run_pretrain(const RunConfig& config, const std::filesystem::path& checkpoint,
                             const std::filesystem::path& metrics_csv = {}, const LogFn& log = {});

struct Environment {
  ToyDataset dataset;
  ProxyReward proxy;
  GoldScore gold;
};

Environment make_environment(const RunConfig& config);

// Proxy mean and gold score on deterministic ODE samples.
CurvePoint evaluate_policy(const NetParams& params, const RunConfig& config, const Environment& env,
                           int iteration);

RewardFn proxy_fn(const Environment& env);
ConditionFn condition_fn(const RunConfig& config, const Environment& env);

struct RLRunOptions {
  std::filesystem::path run_dir;
  std::optional<std::filesystem::path> resume;
  LogFn log;
  int log_every = 25;
};

struct RLRunOutcome {
  std::filesystem::path run_dir;
  double clip_range = 0.0;
  std::vector<CurvePoint> curves;
  std::optional<DiagnosticsFrame> summary;  // absent for zero iterations
  NetParams final_params;
};

RLRunOutcome run_rl_train(const RunConfig& config, const RLRunOptions& options);

// Re-aggregates metrics.csv (+ curves.csv when present) of a finished run,
// writes summary.json, and returns the frame. Throws DataError on missing
// files or an empty run.
DiagnosticsFrame run_diagnose(const std::filesystem::path& run_dir);

std::string format_diagnostics_table(const DiagnosticsFrame& frame);

}  // namespace flowguard
