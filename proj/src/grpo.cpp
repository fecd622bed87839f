#include "flowguard/grpo.hpp"

#include "flowguard/errors.hpp"
#include "flowguard/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace flowguard {

void RLConfig::validate() const {
  variant.validate();
  if (group_size < 2) throw ConfigError("rl.group_size must be >= 2");
  if (groups_per_iter < 1) throw ConfigError("rl.groups_per_iter must be >= 1");
  if (inner_epochs < 1) throw ConfigError("rl.inner_epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("rl.lr must be > 0");
  if (iterations < 0) throw ConfigError("rl.iterations must be >= 0");
  if (!(std_floor > 0.0)) throw ConfigError("rl.std_floor must be > 0");
  if (!(eta > 0.0)) throw ConfigError("schedule.eta must be > 0 for RL training");
  build();  // validates steps / t_eps
}

std::vector<double> group_advantages(std::span<const double> rewards, double std_floor) {
  if (rewards.size() < 2) throw ConfigError("group_advantages: need at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;
  const double denom = std::max(std::sqrt(var), std_floor);
  std::vector<double> adv;
  adv.reserve(rewards.size());
  for (double r : rewards) adv.push_back((r - mean) / denom);
  return adv;
}

SurrogateTerm surrogate_term(double r, double advantage, double clip_range) {
  const double unclipped = r * advantage;
  const double clipped = std::clamp(r, 1.0 - clip_range, 1.0 + clip_range) * advantage;
  if (unclipped <= clipped) return {unclipped, SurrogateBranch::unclipped, GradGate::open};
  return {clipped, SurrogateBranch::clipped, GradGate::closed};
}

StepGradient policy_grads_for_step(const NetParams& params, const TrajectoryStep& step, double advantage,
                                   const RatioVariant& variant, const NoiseSchedule& schedule, const Vec& c,
                                   NetGrads* accumulate) {
  const StepGeometry geom{schedule.variant, schedule.eta, step.t, step.dt, step.sigma};
  const double inv_t = 1.0 / static_cast<double>(schedule.steps);

  StepGradient out;
  RatioRecord& rec = out.record;
  rec.k = step.k;

  const Vec mu = mu_theta(params, step.x_t, step.t, step.dt, step.sigma, c);
  rec.delta_mu = step.mu_old - mu;
  rec.log_r = log_ratio_closed_form(rec.delta_mu, step.eps, step.sigma, step.dt);
  rec.log_r_hat = rationorm(rec.delta_mu, step.eps, step.sigma, step.dt);
  const auto [log_ratio, reweight] = variant_log_ratio(variant, geom, rec.delta_mu, step.eps);
  rec.log_r_used = log_ratio;
  rec.r_used = std::exp(log_ratio);
  rec.grad_scale_factor = variant_grad_scale(variant, geom, rec.delta_mu, step.eps);
  rec.clipped_hi = rec.r_used > 1.0 + variant.clip_range;
  rec.clipped_lo = rec.r_used < 1.0 - variant.clip_range;

  if (!std::isfinite(rec.r_used) || !(rec.r_used > 0.0) || !rec.grad_scale_factor.allFinite() ||
      !std::isfinite(advantage)) {
    out.skipped = true;
    out.grad_v = Vec::Zero(step.x_t.size());
    return out;
  }

  const auto term = surrogate_term(rec.r_used, advantage, variant.clip_range);
  out.objective = reweight * term.value * inv_t;
  if (term.gate == GradGate::open) {
    // d/dv [w r A / T] = r A / T * (w d log r / dv)
    out.grad_v = (rec.r_used * advantage * inv_t) * rec.grad_scale_factor;
  } else {
    out.grad_v = Vec::Zero(step.x_t.size());
  }
  rec.grad_norm = out.grad_v.norm();
  if (accumulate != nullptr && term.gate == GradGate::open) {
    accumulate_backward(params, {step.x_t, step.t, c}, out.grad_v, *accumulate);
  }
  return out;
}

namespace {

struct TrajectoryWork {
  const Trajectory* traj;
  double advantage;
};

struct TrajectoryPass {
  NetGrads grads;
  double objective = 0.0;
  std::vector<RatioRecord> records;
  int skipped = 0;
};

}  // namespace

IterationResult train_iteration(TrainerState& state, const RLConfig& config, const RewardFn& reward,
                                const ConditionFn& condition) {
  config.validate();
  if (!reward) throw ConfigError("train_iteration: reward function required");
  const NoiseSchedule schedule = config.build();
  const int T = schedule.steps;

  IterationResult result{UpdateStats(T), {}, {}};
  UpdateStats& stats = result.stats;
  stats.iteration = state.iteration;

  const NetParams params_old = state.params;

  // rollouts and rewards
  result.groups.reserve(config.groups_per_iter);
  double reward_sum = 0.0;
  for (int g = 0; g < config.groups_per_iter; ++g) {
    const Vec c = condition ? condition(g) : Vec();
    RolloutKey key{config.seed, static_cast<std::uint64_t>(state.iteration), static_cast<std::uint64_t>(g)};
    RolloutGroup group = rollout_group(params_old, schedule, c, config.group_size, key, config.threads);
    stats.invalid_trajectories += group.invalid_count;
    for (const auto& traj : group.trajectories) {
      const double r = reward(traj.x0_final);
      group.rewards.push_back(r);
      reward_sum += r;
    }
    if (group.trajectories.size() >= 2) {
      group.advantages = group_advantages(group.rewards, config.std_floor);
    } else {
      group.advantages.assign(group.trajectories.size(), 0.0);
    }
    stats.valid_trajectories += static_cast<int>(group.trajectories.size());
    result.groups.push_back(std::move(group));
  }
  if (stats.valid_trajectories == 0) throw DivergenceError("train_iteration: every trajectory was invalid");
  stats.proxy_mean = reward_sum / stats.valid_trajectories;

  std::vector<TrajectoryWork> work;
  for (const auto& group : result.groups) {
    for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
      work.push_back({&group.trajectories[i], group.advantages[i]});
    }
  }
  const double inv_n = 1.0 / static_cast<double>(work.size());

  for (int epoch = 0; epoch < config.inner_epochs; ++epoch) {
    std::vector<TrajectoryPass> passes(work.size());
    parallel_for(work.size(), config.threads, [&](std::size_t i) {
      auto& pass = passes[i];
      pass.grads = NetGrads::zeros_like(state.params);
      pass.records.reserve(work[i].traj->steps.size());
      for (const auto& step : work[i].traj->steps) {
        auto sg = policy_grads_for_step(state.params, step, work[i].advantage, config.variant, schedule,
                                        work[i].traj->c, &pass.grads);
        sg.record.epoch = epoch;
        if (sg.skipped) {
          ++pass.skipped;
          continue;
        }
        pass.objective += sg.objective;
        pass.records.push_back(std::move(sg.record));
      }
    });

    // deterministic reduction in trajectory order
    NetGrads total = NetGrads::zeros_like(state.params);
    double objective = 0.0;
    for (auto& pass : passes) {
      total += pass.grads;
      objective += pass.objective;
      stats.skipped_steps += pass.skipped;
      for (auto& rec : pass.records) {
        const auto k = static_cast<std::size_t>(rec.k);
        stats.grad_norm_sum[k] += rec.grad_norm;
        stats.step_count[k] += 1;
        stats.clip_hi[k] += rec.clipped_hi ? 1 : 0;
        stats.clip_lo[k] += rec.clipped_lo ? 1 : 0;
        result.records.push_back(std::move(rec));
      }
    }
    stats.mean_objective = objective * inv_n;
    // ascend the objective
    total *= -inv_n;
    adam_step(state.params, total, state.adam, config.lr);
  }
  state.iteration += 1;
  return result;
}

double calibrate_clip_range(const TrainerState& state, const RLConfig& config, const RewardFn& reward,
                            const ConditionFn& condition, double quantile) {
  if (!(quantile > 0.0 && quantile < 1.0)) throw ConfigError("calibration quantile must lie in (0, 1)");
  TrainerState probe = state;
  RLConfig probe_config = config;
  probe_config.inner_epochs = 2;
  probe_config.variant.clip_range = 1.0 - 1e-12;
  const auto result = train_iteration(probe, probe_config, reward, condition);
  std::vector<double> dev;
  for (const auto& rec : result.records) {
    if (rec.epoch == 1) dev.push_back(std::abs(rec.r_used - 1.0));
  }
  if (dev.empty()) return config.variant.clip_range;
  const auto idx = static_cast<std::size_t>(quantile * static_cast<double>(dev.size() - 1));
  std::nth_element(dev.begin(), dev.begin() + static_cast<std::ptrdiff_t>(idx), dev.end());
  const double picked = dev[idx];
  if (!(picked > 0.0) || !(picked < 1.0)) return config.variant.clip_range;
  return picked;
}

}  // namespace flowguard
