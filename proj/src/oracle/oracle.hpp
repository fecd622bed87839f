#pragma once

// Brute-force validators kept apart from the code they check. Nothing here
// calls into the ratio engine or the policy-gradient code; the only shared
// pieces are the network forward pass and plain data types.

#include "flowguard/net.hpp"
#include "flowguard/random.hpp"
#include "flowguard/ratio.hpp"
#include "flowguard/sde.hpp"

#include <functional>
#include <span>

namespace flowguard::oracle {

struct Estimate {
  double value = 0.0;
  double se = 0.0;

  // |value - target| <= k standard errors (exact match when se == 0).
  bool within(double target, double k = 3.0) const;
};

struct SampleMoments {
  Estimate mean;
  Estimate variance;  // population variance with its large-sample SE
};

SampleMoments sample_moments(std::span<const double> xs);

// Log density of N(mu, s2 I) at x, written out term by term.
double gaussian_log_density(const Vec& x, const Vec& mu, double s2);

// Two Gaussian transition kernels with a common variance sigma^2 dt whose
// means differ by delta_mu = mu_old - mu_theta. Evaluates the log ratio by
// direct density difference at x = mu_old + sigma sqrt(dt) eps.
class TwoGaussianEnv {
 public:
  TwoGaussianEnv(Vec mu_old, Vec mu_theta, double sigma, double dt);
  static TwoGaussianEnv from_delta(const Vec& delta_mu, double sigma, double dt);

  double log_ratio(const Vec& eps) const;
  // Same transition with the roles of the two policies exchanged.
  TwoGaussianEnv swapped() const;

  const Vec& mu_old() const { return mu_old_; }
  const Vec& mu_theta() const { return mu_theta_; }

 private:
  Vec mu_old_;
  Vec mu_theta_;
  double sigma_;
  double dt_;
};

TwoGaussianEnv two_gaussian_env(const Vec& delta_mu, double sigma, double dt);

struct RatioMomentsMC {
  Estimate mean;       // of log r
  Estimate variance;   // of log r
  Estimate mean_of_r;  // of r
  long samples = 0;
};

// Moments of log r and r over n fresh eps draws; n >= 1e4.
RatioMomentsMC mc_ratio_moments(const Vec& delta_mu, double sigma, double dt, long n, Rng& rng);

using LossFn = std::function<double(const NetParams&)>;

// Central differences for every parameter; h in [1e-6, 1e-4].
NetGrads fd_gradient(const LossFn& loss, const NetParams& params, double h = 1e-5);

// Largest |a_i - b_i| / max(|a_i|, |b_i|, floor) over all entries.
double max_relative_error(const LayerStack& a, const LayerStack& b, double floor = 1e-8);
// |a - b| / max(|b|, floor) over the flattened vectors.
double norm_relative_error(const LayerStack& a, const LayerStack& b, double floor = 1e-12);

// One stored transition, described independently of the trainer's types.
struct Transition {
  Vec x_t;
  Vec eps;
  Vec mu_old;
  Vec c;
  double t = 0.5;
  double dt = 0.125;
  double sigma = 0.7;
};

// x - [v + sigma^2/(2t) (x + (1-t) v)] dt with v from the network.
Vec step_mean(const NetParams& params, const Transition& tr);

struct ObjectiveSpec {
  VariantKind variant = VariantKind::baseline;
  ScheduleVariant schedule = ScheduleVariant::flow_grpo;
  double eta = 0.7;
  double clip_range = 0.5;
  double advantage = 1.0;
  int steps = 8;  // T in the 1/T average
};

// Log ratio a variant clips, from direct density differences at mu_theta.
double direct_log_ratio(const Vec& mu_theta, const Transition& tr, VariantKind variant);

// Clipped per-step objective built from direct density differences.
double step_objective(const NetParams& params, const Transition& tr, const ObjectiveSpec& spec);

// Same objective as a function of the velocity output alone.
double step_objective_from_v(const Vec& v, const Transition& tr, const ObjectiveSpec& spec);

// Central differences of step_objective_from_v with respect to v.
Vec fd_velocity_gradient(const Vec& v, const Transition& tr, const ObjectiveSpec& spec, double h = 1e-6);

}  // namespace flowguard::oracle
