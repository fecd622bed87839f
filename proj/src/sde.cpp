#include "flowguard/sde.hpp"

#include "flowguard/errors.hpp"
#include "flowguard/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace flowguard {

ScheduleVariant parse_schedule_variant(std::string_view name) {
  if (name == "flow_grpo") return ScheduleVariant::flow_grpo;
  if (name == "dance_grpo") return ScheduleVariant::dance_grpo;
  throw ConfigError("unknown schedule variant '" + std::string(name) + "' (valid: flow_grpo, dance_grpo)");
}

std::string_view to_string(ScheduleVariant variant) {
  return variant == ScheduleVariant::flow_grpo ? "flow_grpo" : "dance_grpo";
}

double schedule_sigma(ScheduleVariant variant, double eta, double t) {
  switch (variant) {
    case ScheduleVariant::flow_grpo:
      return eta * std::sqrt(t / (1.0 - t));
    case ScheduleVariant::dance_grpo:
      return eta;
  }
  throw ConfigError("unknown schedule variant");
}

double NoiseSchedule::sigma(double t) const {
  return schedule_sigma(variant, eta, std::clamp(t, t_eps, 1.0 - t_eps));
}

NoiseSchedule build_schedule(ScheduleVariant variant, double eta, int steps, double t_eps) {
  if (steps < 2) throw ConfigError("schedule: steps must be >= 2");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("schedule: eta must be finite and >= 0");
  if (!(t_eps > 0.0 && t_eps < 0.1)) throw ConfigError("schedule: t_eps must lie in (0, 0.1)");
  NoiseSchedule s;
  s.variant = variant;
  s.eta = eta;
  s.steps = steps;
  s.t_eps = t_eps;
  s.grid.reserve(steps);
  const double dt = 1.0 / steps;
  for (int k = 0; k < steps; ++k) {
    const double t = std::clamp(1.0 - static_cast<double>(k) / steps, t_eps, 1.0 - t_eps);
    s.grid.push_back({t, dt, schedule_sigma(variant, eta, t)});
  }
  return s;
}

NoiseSchedule build_schedule(std::string_view variant, double eta, int steps, double t_eps) {
  return build_schedule(parse_schedule_variant(variant), eta, steps, t_eps);
}

double drift_v_coefficient(double t, double sigma) { return 1.0 + sigma * sigma * (1.0 - t) / (2.0 * t); }

Vec drift_mean(const Vec& v, const Vec& x, double t, double dt, double sigma) {
  const double a = sigma * sigma / (2.0 * t);
  return x - (v + a * (x + (1.0 - t) * v)) * dt;
}

Vec mu_theta(const NetParams& params, const Vec& x, double t, double dt, double sigma, const Vec& c) {
  if (!(t > 0.0)) throw ConfigError("mu_theta: t must be > 0 after clamping");
  return drift_mean(forward(params, {x, t, c}), x, t, dt, sigma);
}

Vec TrajectoryStep::next_state() const { return mu_old + (sigma * std::sqrt(dt)) * eps; }

Trajectory rollout_trajectory(const NetParams& params_old, const NoiseSchedule& schedule, const Vec& c,
                              Rng& rng, const std::optional<Vec>& x1) {
  const int d = params_old.arch.data_dim;
  Trajectory traj;
  traj.c = c;
  traj.x1 = x1 ? *x1 : standard_normal(rng, d);
  traj.steps.reserve(schedule.grid.size());
  Vec x = traj.x1;
  for (std::size_t k = 0; k < schedule.grid.size(); ++k) {
    const auto& g = schedule.grid[k];
    TrajectoryStep step;
    step.k = static_cast<int>(k);
    step.t = g.t;
    step.dt = g.dt;
    step.sigma = g.sigma;
    step.x_t = x;
    step.v_old = forward(params_old, {x, g.t, c});
    step.mu_old = drift_mean(step.v_old, x, g.t, g.dt, g.sigma);
    step.eps = standard_normal(rng, d);
    x = step.next_state();
    traj.steps.push_back(std::move(step));
    if (!x.allFinite()) {
      traj.valid = false;
      break;
    }
  }
  traj.x0_final = x;
  return traj;
}

RolloutGroup rollout_group(const NetParams& params_old, const NoiseSchedule& schedule, const Vec& c, int group_size,
                           const RolloutKey& key, int threads) {
  if (group_size < 2) throw ConfigError("rollout: group size must be >= 2");
  std::optional<Vec> shared_x1;
  if (schedule.variant == ScheduleVariant::dance_grpo) {
    // member index past the group range keys the shared initial noise
    Rng rng = make_stream({key.seed, key.iteration, key.group, 0xffffffffull});
    shared_x1 = standard_normal(rng, params_old.arch.data_dim);
  }
  std::vector<Trajectory> all(group_size);
  parallel_for(all.size(), threads, [&](std::size_t m) {
    Rng rng = make_stream({key.seed, key.iteration, key.group, static_cast<std::uint64_t>(m)});
    all[m] = rollout_trajectory(params_old, schedule, c, rng, shared_x1);
  });
  RolloutGroup group;
  group.c = c;
  for (auto& traj : all) {
    if (traj.valid) {
      group.trajectories.push_back(std::move(traj));
    } else {
      ++group.invalid_count;
    }
  }
  return group;
}

std::vector<Vec> ode_sample(const NetParams& params, int count, int steps, std::uint64_t seed,
                            const std::vector<Vec>& conditions, int threads) {
  if (count <= 0 || steps <= 0) throw ConfigError("ode_sample: count and steps must be positive");
  if (!conditions.empty() && static_cast<int>(conditions.size()) != count) {
    throw ConfigError("ode_sample: need one condition per sample");
  }
  const int d = params.arch.data_dim;
  std::vector<Vec> out(count);
  parallel_for(out.size(), threads, [&](std::size_t i) {
    Rng rng = make_stream({seed, 0x0de0ull, static_cast<std::uint64_t>(i)});
    Vec x = standard_normal(rng, d);
    const Vec c = conditions.empty() ? Vec() : conditions[i];
    const double dt = 1.0 / steps;
    for (int k = 0; k < steps; ++k) {
      const double t = 1.0 - static_cast<double>(k) / steps;
      x -= forward(params, {x, t, c}) * dt;
    }
    out[i] = std::move(x);
  });
  return out;
}

void write_trajectory_dump(std::span<const RolloutGroup> groups, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw DataError("cannot write trajectory dump: " + path.string());
  int d = 0;
  for (const auto& g : groups) {
    if (!g.trajectories.empty() && !g.trajectories.front().steps.empty()) {
      d = static_cast<int>(g.trajectories.front().steps.front().x_t.size());
      break;
    }
  }
  os << "group,member,k,t,dt,sigma_t";
  for (const char* name : {"eps", "x_t", "mu_old", "v_old"}) {
    for (int i = 0; i < d; ++i) os << ',' << name << '_' << i;
  }
  os << '\n';
  os.precision(17);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& trajs = groups[gi].trajectories;
    for (std::size_t m = 0; m < trajs.size(); ++m) {
      for (const auto& s : trajs[m].steps) {
        os << gi << ',' << m << ',' << s.k << ',' << s.t << ',' << s.dt << ',' << s.sigma;
        for (const Vec* v : {&s.eps, &s.x_t, &s.mu_old, &s.v_old}) {
          for (int i = 0; i < d; ++i) os << ',' << (*v)[i];
        }
        os << '\n';
      }
    }
  }
}

}  // namespace flowguard
