#pragma once

#include "flowguard/flow_pretrain.hpp"
#include "flowguard/grpo.hpp"
#include "flowguard/net.hpp"
#include "flowguard/rewards.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace flowguard {

struct DatasetConfig {
  int modes = 8;
  double radius = 4.0;
  double cov_scale = 0.05;
  int dim = 2;
  bool conditional = false;

  ToyDataset build() const;
};

struct RewardConfig {
  double attractor_scale = 1.3;
  double sharpness = 1.0;
  double coverage_radius = 0.0;  // <= 0 means 3 mode std
  int gold_eval_count = 1024;
  int gold_eval_every = 10;
  int gold_ode_steps = 50;
  std::uint64_t gold_seed = 20251028;
};

struct DiagnosticsConfig {
  int histogram_bins = 64;
  int histogram_every = 10;
  bool dump_trajectories = false;
};

struct RLSection {
  RLConfig rl;
  std::optional<double> clip_range;  // explicit override
  bool calibrate_clip = true;
  // normalized-ratio variants take a third of the raw-ratio step size
  std::map<std::string, double> lr_by_variant = {{"rationorm", 5e-5}, {"grpo_guard", 5e-5}};
  std::map<std::string, int> epochs_by_variant;
  std::string init_checkpoint;  // empty: the pretrained checkpoint
  int checkpoint_every = 50;
};

struct RunConfig {
  DatasetConfig dataset;
  NetArch net;
  std::uint64_t init_seed = 0;
  PretrainConfig pretrain;
  std::string pretrain_checkpoint;  // empty: <run root>/pretrained.bin
  RLSection rl;
  RewardConfig rewards;
  DiagnosticsConfig diagnostics;
  std::string run_root = "runs";
  int threads = 0;  // 0 = logical cores

  // Resolves per-variant defaults (lr, epochs, clip range) for the selected
  // variant into rl.rl. Call after every override is applied.
  RLConfig resolved_rl() const;
  void validate() const;
};

// Strict parse: unknown keys and wrong types raise ConfigError naming the
// field. Missing keys keep their defaults.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
std::string dump_config(const RunConfig& config);

// FLOWGUARD_RUN_ROOT overrides run.root when set.
std::filesystem::path run_root(const RunConfig& config);

std::filesystem::path pretrained_checkpoint_path(const RunConfig& config);
// rl.init_checkpoint, falling back to the pretrained checkpoint.
std::filesystem::path init_checkpoint_path(const RunConfig& config);

}  // namespace flowguard
