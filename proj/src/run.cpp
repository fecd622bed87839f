#include "flowguard/run.hpp"

#include "flowguard/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace flowguard {

namespace fs = std::filesystem;

namespace {

std::ofstream open_csv(const fs::path& path, const char* header) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << header << '\n';
  return os;
}

std::string iteration_tag(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iter_%05d", i);
  return buf;
}

}  // namespace

PretrainOutcome run_pretrain(const RunConfig& config, const fs::path& checkpoint, const fs::path& metrics_csv,
                             const LogFn& log) {
  const ToyDataset dataset = config.dataset.build();
  std::ofstream metrics;
  if (!metrics_csv.empty()) {
    if (metrics_csv.has_parent_path()) fs::create_directories(metrics_csv.parent_path());
    metrics = open_csv(metrics_csv, "step,loss");
  }
  const int every = std::max(1, config.pretrain.steps / 20);
  auto result = pretrain(dataset, config.net, config.pretrain, [&](int step, double loss) {
    if (metrics.is_open()) metrics << step << ',' << loss << '\n';
    if (log && (step % every == 0 || step + 1 == config.pretrain.steps)) {
      log("pretrain step " + std::to_string(step) + " loss " + std::to_string(loss));
    }
  });
  save_checkpoint(result.params, checkpoint);
  return {std::move(result.params), std::move(result.losses)};
}

Environment make_environment(const RunConfig& config) {
  ToyDataset dataset = config.dataset.build();
  ProxyReward proxy = ProxyReward::between_modes(dataset, config.rewards.attractor_scale, config.rewards.sharpness);
  const double radius =
      config.rewards.coverage_radius > 0.0 ? config.rewards.coverage_radius : 3.0 * dataset.mode_std();
  GoldScore gold = GoldScore::make(dataset, radius, config.rewards.gold_eval_count, config.rewards.gold_seed);
  return {std::move(dataset), std::move(proxy), std::move(gold)};
}

RewardFn proxy_fn(const Environment& env) {
  return [proxy = env.proxy](const Vec& x) { return proxy_reward(x, proxy); };
}

ConditionFn condition_fn(const RunConfig& config, const Environment& env) {
  if (!config.dataset.conditional) return {};
  return [ds = env.dataset](int group) { return ds.condition_for(group % ds.num_modes()); };
}

CurvePoint evaluate_policy(const NetParams& params, const RunConfig& config, const Environment& env,
                           int iteration) {
  std::vector<Vec> conditions;
  if (config.dataset.conditional) {
    for (int i = 0; i < config.rewards.gold_eval_count; ++i) {
      conditions.push_back(env.dataset.condition_for(i % env.dataset.num_modes()));
    }
  }
  const auto samples = ode_sample(params, config.rewards.gold_eval_count, config.rewards.gold_ode_steps,
                                  config.rewards.gold_seed, conditions, config.threads);
  double proxy = 0.0;
  for (const auto& x : samples) proxy += proxy_reward(x, env.proxy);
  proxy /= static_cast<double>(samples.size());
  const auto gold = gold_score(samples, env.gold);
  return {iteration, proxy, gold.composite, gold.log_density, gold.mode_coverage};
}

RLRunOutcome run_rl_train(const RunConfig& config, const RLRunOptions& options) {
  config.validate();
  const Environment env = make_environment(config);
  RLConfig rl = config.resolved_rl();

  const fs::path init = options.resume.value_or(init_checkpoint_path(config));
  if (!fs::exists(init)) {
    throw DataError("initial checkpoint not found: " + init.string() + " (run `pretrain` first)");
  }
  TrainerState state = TrainerState::from(load_checkpoint(init));
  if (state.params.arch.data_dim != config.net.data_dim || state.params.arch.cond_dim != config.net.cond_dim) {
    throw ConfigError("checkpoint architecture does not match dataset configuration: " + init.string());
  }

  const RewardFn reward = proxy_fn(env);
  const ConditionFn condition = condition_fn(config, env);

  if (config.rl.calibrate_clip && !config.rl.clip_range && rl.iterations > 0) {
    rl.variant.clip_range = calibrate_clip_range(state, rl, reward, condition);
    if (options.log) {
      std::ostringstream msg;
      msg << "calibrated clip_range " << rl.variant.clip_range;
      options.log(msg.str());
    }
  }
  rl.validate();

  RLRunOutcome out;
  out.run_dir = options.run_dir;
  out.clip_range = rl.variant.clip_range;
  fs::create_directories(options.run_dir / "checkpoints");

  {
    RunConfig snapshot = config;
    snapshot.rl.rl = rl;
    snapshot.rl.clip_range = rl.variant.clip_range;
    snapshot.rl.calibrate_clip = false;
    snapshot.rl.init_checkpoint = init.string();
    std::ofstream os(options.run_dir / "config.json");
    os << dump_config(snapshot);
  }

  auto metrics = open_csv(options.run_dir / "metrics.csv", kMetricsHeader);
  auto curves = open_csv(options.run_dir / "curves.csv", kCurvesHeader);
  auto histograms = open_csv(options.run_dir / "histograms.csv", kHistogramsHeader);

  const NoiseSchedule schedule = rl.build();
  std::vector<double> t_grid;
  for (const auto& g : schedule.grid) t_grid.push_back(g.t);
  DiagnosticsAggregator agg(t_grid, config.diagnostics.histogram_bins);

  auto record_curve = [&](int iteration) {
    const CurvePoint p = evaluate_policy(state.params, config, env, iteration);
    agg.add_curve_point(p);
    out.curves.push_back(p);
    curves << format_curve_row(p) << '\n';
    curves.flush();
    return p;
  };
  if (rl.iterations > 0) record_curve(0);

  for (int i = 0; i < rl.iterations; ++i) {
    const auto result = train_iteration(state, rl, reward, condition);
    const auto rows = agg.ingest(result.records);
    for (const auto& row : rows) metrics << format_metrics_row(i, row) << '\n';

    if (i % config.diagnostics.histogram_every == 0 && agg.has_histogram_range()) {
      for (const auto& h : agg.last_iteration_histograms()) {
        for (int b = 0; b < static_cast<int>(h.counts.size()); ++b) {
          char buf[48];
          std::snprintf(buf, sizeof buf, "%.12g", h.bin_left(b));
          histograms << i << ',' << h.k << ',' << buf << ',' << h.counts[b] << '\n';
        }
      }
      if (config.diagnostics.dump_trajectories) {
        write_trajectory_dump(result.groups, options.run_dir / "trajectories" / (iteration_tag(i) + ".csv"));
      }
    }

    const int done = i + 1;
    if (done % config.rewards.gold_eval_every == 0 || done == rl.iterations) {
      const auto p = record_curve(done);
      if (options.log && (done % options.log_every == 0 || done == rl.iterations)) {
        std::ostringstream msg;
        msg << "iter " << done << " proxy(rollout) " << result.stats.proxy_mean << " proxy(eval) " << p.proxy_mean
            << " gold " << p.gold_composite;
        options.log(msg.str());
      }
    }
    if (config.rl.checkpoint_every > 0 && done % config.rl.checkpoint_every == 0) {
      save_checkpoint(state.params, options.run_dir / "checkpoints" / (iteration_tag(done) + ".bin"));
    }
  }
  metrics.flush();
  histograms.flush();

  save_checkpoint(state.params, options.run_dir / "checkpoints" / "final.bin");
  if (agg.iterations_ingested() > 0) {
    out.summary = agg.summary();
    write_summary_json(*out.summary, options.run_dir / "summary.json");
  }
  out.final_params = std::move(state.params);
  return out;
}

DiagnosticsFrame run_diagnose(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw DataError("run directory not found: " + run_dir.string());
  const auto rows = read_metrics_csv(run_dir / "metrics.csv");
  DiagnosticsFrame frame = summarize_metrics(rows);
  if (fs::exists(run_dir / "curves.csv")) frame.curves = read_curves_csv(run_dir / "curves.csv");
  write_summary_json(frame, run_dir / "summary.json");
  return frame;
}

std::string format_diagnostics_table(const DiagnosticsFrame& frame) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%3s %8s %13s %12s %10s %10s %13s\n", "k", "t", "mean_log_r", "var_log_r",
                "clip_hi", "clip_lo", "grad_norm");
  os << line;
  for (const auto& s : frame.steps) {
    std::snprintf(line, sizeof line, "%3d %8.4f %13.5e %12.5e %10.4f %10.4f %13.5e\n", s.k, s.t, s.mean_log_r,
                  s.var_log_r, s.clip_hi_frac, s.clip_lo_frac, s.grad_norm_mean);
    os << line;
  }
  std::snprintf(line, sizeof line, "grad-norm spread (max/min over timesteps): %.4g\n", frame.grad_norm_spread);
  os << line;
  if (!frame.curves.empty()) {
    const auto& first = frame.curves.front();
    const auto& last = frame.curves.back();
    std::snprintf(line, sizeof line, "proxy %.5g -> %.5g, gold composite %.4f -> %.4f (iterations %d -> %d)\n",
                  first.proxy_mean, last.proxy_mean, first.gold_composite, last.gold_composite, first.iteration,
                  last.iteration);
    os << line;
  }
  return os.str();
}

}  // namespace flowguard
