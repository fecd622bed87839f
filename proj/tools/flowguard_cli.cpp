#include "flowguard/config.hpp"
#include "flowguard/errors.hpp"
#include "flowguard/run.hpp"
#include "oracle/checks.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace flowguard;

namespace {

enum Exit : int {
  kOk = 0,
  kUsage = 1,
  kConfig = 2,
  kDivergence = 3,
  kOracle = 4,
  kData = 5,
};

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

RunConfig load_or_default(const std::string& path) {
  if (path.empty()) return RunConfig{};
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  return load_config(path);
}

struct PretrainArgs {
  std::string config;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_pretrain(const PretrainArgs& a) {
  RunConfig cfg = load_or_default(a.config);
  if (a.steps) cfg.pretrain.steps = *a.steps;
  if (a.seed) cfg.pretrain.seed = *a.seed;
  cfg.validate();
  const fs::path out = a.out.empty() ? pretrained_checkpoint_path(cfg) : fs::path(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const fs::path metrics = out.parent_path() / (out.stem().string() + "_loss.csv");
  const auto res = run_pretrain(cfg, out, metrics, log_line);
  std::printf("wrote %s (%d steps", out.string().c_str(), cfg.pretrain.steps);
  if (!res.losses.empty()) std::printf(", final loss %.6f", res.losses.back());
  std::printf(")\n");
  return kOk;
}

struct RLArgs {
  std::string config;
  std::string variant;
  std::optional<int> iters;
  std::string resume;
  std::string run_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<double> clip_range;
  std::optional<double> lr;
  std::optional<int> epochs;
  std::optional<double> eta;
};

int cmd_rl_train(const RLArgs& a) {
  RunConfig cfg = load_or_default(a.config);
  if (!a.variant.empty()) cfg.rl.rl.variant.kind = parse_variant(a.variant);
  if (a.iters) cfg.rl.rl.iterations = *a.iters;
  if (a.seed) cfg.rl.rl.seed = *a.seed;
  if (a.threads) cfg.threads = *a.threads;
  if (a.clip_range) cfg.rl.clip_range = *a.clip_range;
  if (a.eta) cfg.rl.rl.eta = *a.eta;
  const std::string name(to_string(cfg.rl.rl.variant.kind));
  if (a.lr) cfg.rl.lr_by_variant[name] = *a.lr;
  if (a.epochs) cfg.rl.epochs_by_variant[name] = *a.epochs;
  cfg.validate();

  RLRunOptions opts;
  opts.run_dir = a.run_dir.empty() ? run_root(cfg) / (name + "_s" + std::to_string(cfg.rl.rl.seed))
                                   : fs::path(a.run_dir);
  if (!a.resume.empty()) opts.resume = fs::path(a.resume);
  opts.log = log_line;
  const auto out = run_rl_train(cfg, opts);
  std::printf("run directory %s\n", out.run_dir.string().c_str());
  std::printf("variant %s, clip_range %.6g\n", name.c_str(), out.clip_range);
  if (!out.curves.empty()) {
    const auto& first = out.curves.front();
    const auto& last = out.curves.back();
    std::printf("proxy %.5f -> %.5f, gold composite %.4f -> %.4f\n", first.proxy_mean, last.proxy_mean,
                first.gold_composite, last.gold_composite);
  }
  return kOk;
}

int cmd_diagnose(const std::string& run_dir) {
  const auto frame = run_diagnose(run_dir);
  std::cout << format_diagnostics_table(frame);
  std::printf("wrote %s\n", (fs::path(run_dir) / "summary.json").string().c_str());
  return kOk;
}

int cmd_oracle_check(std::uint64_t seed) {
  const auto report = oracle::run_oracle_checks(seed);
  std::cout << report.text();
  return report.all_passed() ? kOk : kOracle;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowguard: GRPO for flow-matching models with ratio normalization and gradient reweighting"};
  app.require_subcommand(1);

  PretrainArgs pa;
  auto* pretrain = app.add_subcommand("pretrain", "train the base velocity model");
  pretrain->add_option("--config", pa.config, "JSON config file (defaults when omitted)");
  pretrain->add_option("--steps", pa.steps, "override pretrain.steps")->check(CLI::NonNegativeNumber);
  pretrain->add_option("--seed", pa.seed, "override pretrain.seed");
  pretrain->add_option("--out", pa.out, "checkpoint path (default <run root>/pretrained.bin)");

  RLArgs ra;
  auto* rl = app.add_subcommand("rl-train", "GRPO fine-tuning against the proxy reward");
  rl->add_option("--config", ra.config, "JSON config file (defaults when omitted)");
  rl->add_option("--variant", ra.variant, "one of: " + valid_variant_names());
  rl->add_option("--iters", ra.iters, "override rl.iterations")->check(CLI::NonNegativeNumber);
  rl->add_option("--resume", ra.resume, "start from this checkpoint instead of the pretrained one");
  rl->add_option("--run-dir", ra.run_dir, "output directory (default <run root>/<variant>_s<seed>)");
  rl->add_option("--seed", ra.seed, "override rl.seed");
  rl->add_option("--threads", ra.threads, "worker threads, 0 = logical cores")->check(CLI::NonNegativeNumber);
  rl->add_option("--clip-range", ra.clip_range, "fixed clip range (disables calibration)");
  rl->add_option("--lr", ra.lr, "learning rate for the selected variant");
  rl->add_option("--epochs", ra.epochs, "inner epochs for the selected variant");
  rl->add_option("--eta", ra.eta, "override schedule.eta");

  std::string run_dir;
  auto* diagnose = app.add_subcommand("diagnose", "summarize a finished run");
  diagnose->add_option("run_dir", run_dir, "run directory")->required();

  std::uint64_t oracle_seed = 20251028;
  auto* oracle = app.add_subcommand("oracle-check", "run the oracle cross-checks");
  oracle->add_option("--seed", oracle_seed, "seed for the randomized checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*pretrain) return cmd_pretrain(pa);
    if (*rl) return cmd_rl_train(ra);
    if (*diagnose) return cmd_diagnose(run_dir);
    if (*oracle) return cmd_oracle_check(oracle_seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
