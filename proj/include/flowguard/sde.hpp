#pragma once

// Stochastic sampler for the flow: schedule construction, the drift mean
// mu(x_t, t), grouped rollouts under a frozen old policy, and plain Euler
// ODE sampling used for gold evaluation.
//
// Time runs downward: t_k = 1 - k/T (clamped), dt = 1/T > 0, and one step
// maps x_t to
//   x_next = x_t - [v + sigma^2/(2t) (x_t + (1-t) v)] dt + sigma sqrt(dt) eps
// so that sigma -> 0 gives reverse-time Euler toward the data at t = 0.

#include "flowguard/net.hpp"
#include "flowguard/random.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flowguard {

enum class ScheduleVariant { flow_grpo, dance_grpo };

ScheduleVariant parse_schedule_variant(std::string_view name);
std::string_view to_string(ScheduleVariant variant);

struct GridPoint {
  double t;      // clamped
  double dt;
  double sigma;  // evaluated at the clamped t
};

struct NoiseSchedule {
  ScheduleVariant variant = ScheduleVariant::flow_grpo;
  double eta = 0.7;
  int steps = 8;
  double t_eps = 1e-3;
  std::vector<GridPoint> grid;

  double sigma(double t) const;
};

// flow_grpo: sigma(t) = eta sqrt(t / (1 - t)); dance_grpo: sigma = eta.
double schedule_sigma(ScheduleVariant variant, double eta, double t);

NoiseSchedule build_schedule(ScheduleVariant variant, double eta, int steps, double t_eps = 1e-3);
NoiseSchedule build_schedule(std::string_view variant, double eta, int steps, double t_eps = 1e-3);

// d mu / d v = -drift_v_coefficient * dt; equals 1 + sigma^2 (1-t) / (2t).
double drift_v_coefficient(double t, double sigma);

// Drift mean given an already-evaluated velocity v.
Vec drift_mean(const Vec& v, const Vec& x, double t, double dt, double sigma);

Vec mu_theta(const NetParams& params, const Vec& x, double t, double dt, double sigma, const Vec& c = {});

struct TrajectoryStep {
  int k = 0;
  double t = 0.0;
  double dt = 0.0;
  double sigma = 0.0;
  Vec x_t;
  Vec eps;
  Vec mu_old;
  Vec v_old;

  Vec next_state() const;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  Vec x1;
  Vec x0_final;
  Vec c;
  bool valid = true;
};

struct RolloutGroup {
  std::vector<Trajectory> trajectories;
  std::vector<double> rewards;
  std::vector<double> advantages;
  Vec c;
  int invalid_count = 0;  // trajectories dropped for non-finite states
};

// Key for the per-trajectory random streams; member m of group g in
// iteration i draws from make_stream({seed, iteration, group, m}).
struct RolloutKey {
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  std::uint64_t group = 0;
};

// Samples one trajectory. `x1` overrides the initial noise when given.
Trajectory rollout_trajectory(const NetParams& params_old, const NoiseSchedule& schedule, const Vec& c,
                              Rng& rng, const std::optional<Vec>& x1 = std::nullopt);

// G trajectories sharing condition c. Under dance_grpo every member starts
// from the same x1. Invalid trajectories are excluded and counted.
RolloutGroup rollout_group(const NetParams& params_old, const NoiseSchedule& schedule, const Vec& c, int group_size,
                           const RolloutKey& key, int threads = 1);

// Deterministic Euler ODE samples from x1 ~ N(0, I), t: 1 -> 0 in `steps`.
std::vector<Vec> ode_sample(const NetParams& params, int count, int steps, std::uint64_t seed,
                            const std::vector<Vec>& conditions = {}, int threads = 1);

// CSV dump of every step of every trajectory in a batch of groups. Columns:
// group,member,k,t,dt,sigma_t,eps_0..,x_t_0..,mu_old_0..,v_old_0..
void write_trajectory_dump(std::span<const RolloutGroup> groups, const std::filesystem::path& path);

}  // namespace flowguard
