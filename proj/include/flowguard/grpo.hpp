#pragma once

#include "flowguard/net.hpp"
#include "flowguard/ratio.hpp"
#include "flowguard/sde.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace flowguard {

struct RLConfig {
  RatioVariant variant = RatioVariant::with_default_clip(VariantKind::grpo_guard);
  ScheduleVariant schedule = ScheduleVariant::flow_grpo;
  double eta = 0.7;
  int steps = 8;
  double t_eps = 1e-3;
  int group_size = 16;
  int groups_per_iter = 8;
  int inner_epochs = 2;
  double lr = 1.5e-4;
  int iterations = 300;
  std::uint64_t seed = 0;
  double std_floor = 1e-6;
  int threads = 1;

  NoiseSchedule build() const { return build_schedule(schedule, eta, steps, t_eps); }
  void validate() const;
};

struct UpdateStats {
  int iteration = 0;
  std::vector<double> grad_norm_sum;  // per timestep, sum of |dJ/dv|
  std::vector<std::int64_t> step_count;
  std::vector<std::int64_t> clip_hi;
  std::vector<std::int64_t> clip_lo;
  double mean_objective = 0.0;  // last epoch, mean over trajectories
  double proxy_mean = 0.0;
  int valid_trajectories = 0;
  int invalid_trajectories = 0;
  int skipped_steps = 0;

  explicit UpdateStats(int steps = 0)
      : grad_norm_sum(steps, 0.0), step_count(steps, 0), clip_hi(steps, 0), clip_lo(steps, 0) {}
};

// (R - mean) / max(population std, std_floor).
std::vector<double> group_advantages(std::span<const double> rewards, double std_floor);

enum class SurrogateBranch { unclipped, clipped };
enum class GradGate { open, closed };

struct SurrogateTerm {
  double value;
  SurrogateBranch branch;
  GradGate gate;
};

// min(r A, clip(r, 1 - eps, 1 + eps) A); ties pick the unclipped branch.
SurrogateTerm surrogate_term(double r, double advantage, double clip_range);

struct StepGradient {
  double objective = 0.0;  // reweight * surrogate / T
  Vec grad_v;              // d objective / d v at the step's input
  RatioRecord record;
  bool skipped = false;
};

// Objective contribution of one stored transition under the current params
// and its gradient. The old-policy mean comes from the step record. When
// `accumulate` is given, d objective / d params is added into it.
StepGradient policy_grads_for_step(const NetParams& params, const TrajectoryStep& step, double advantage,
                                   const RatioVariant& variant, const NoiseSchedule& schedule, const Vec& c,
                                   NetGrads* accumulate = nullptr);

struct TrainerState {
  NetParams params;
  AdamState adam;
  int iteration = 0;

  static TrainerState from(NetParams params) {
    TrainerState s{std::move(params), {}, 0};
    s.adam = AdamState::for_params(s.params);
    return s;
  }
};

using RewardFn = std::function<double(const Vec&)>;
using ConditionFn = std::function<Vec(int group)>;

struct IterationResult {
  UpdateStats stats;
  std::vector<RatioRecord> records;
  std::vector<RolloutGroup> groups;
};

// One GRPO iteration: snapshot params_old, roll out, score, compute group
// advantages, then `inner_epochs` passes over every (trajectory, step) with
// one Adam step per pass. Objective aggregation: mean over trajectories and
// mean over steps.
IterationResult train_iteration(TrainerState& state, const RLConfig& config, const RewardFn& reward,
                                const ConditionFn& condition = {});

// Picks clip_range as the `quantile` of |r - 1| seen in the second pass of
// one unclipped iteration from `state` (state itself is not modified).
double calibrate_clip_range(const TrainerState& state, const RLConfig& config, const RewardFn& reward,
                            const ConditionFn& condition = {}, double quantile = 0.9);

}  // namespace flowguard
