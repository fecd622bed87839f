#pragma once

// Gaussian step densities and the importance ratio between the current and
// the rollout policy for one SDE transition.
//
// With delta_mu = mu_old - mu_theta and x_next = mu_old + sigma sqrt(dt) eps:
//   log r      = -|delta_mu|^2 / (2 sigma^2 dt) - delta_mu.eps / (sigma sqrt(dt))
//   log r_hat  = -delta_mu.eps                         (normalized ratio)
//
// Five training variants differ in which log ratio is clipped and how each
// step's term is reweighted:
//   baseline       log r                     weight 1
//   temp_reweight  log r                     weight sigma sqrt(dt)
//   mean_revised   log r + |dmu|^2/(2s^2dt)  weight 1
//   rationorm      log r_hat                 weight 1
//   grpo_guard     log r_hat                 weight delta (1/dt or beta/dt)

#include "flowguard/net.hpp"
#include "flowguard/sde.hpp"

#include <array>
#include <string>
#include <string_view>

namespace flowguard {

enum class VariantKind { baseline, temp_reweight, mean_revised, rationorm, grpo_guard };

inline constexpr std::array<VariantKind, 5> kAllVariants = {
    VariantKind::baseline, VariantKind::temp_reweight, VariantKind::mean_revised, VariantKind::rationorm,
    VariantKind::grpo_guard};

VariantKind parse_variant(std::string_view name);
std::string_view to_string(VariantKind kind);
std::string valid_variant_names();

// Clip range used when none is configured: 1e-4 for the raw-ratio variants,
// 2e-6 for the normalized ones.
double default_clip_range(VariantKind kind);

struct RatioVariant {
  VariantKind kind = VariantKind::grpo_guard;
  double clip_range = 2e-6;

  static RatioVariant with_default_clip(VariantKind kind) { return {kind, default_clip_range(kind)}; }
  void validate() const;
};

// What a single transition looks like to the ratio engine.
struct StepGeometry {
  ScheduleVariant schedule = ScheduleVariant::flow_grpo;
  double eta = 0.7;
  double t = 0.5;
  double dt = 0.125;
  double sigma = 0.7;

  static StepGeometry of(const NoiseSchedule& schedule, const GridPoint& point);
};

// Full Gaussian log-density including C_t = (d/2) log(2 pi sigma^2 dt).
double log_step_density(const Vec& mu, double sigma, double dt, const Vec& x_next);

double log_ratio_closed_form(const Vec& delta_mu, const Vec& eps, double sigma, double dt);

struct LogRatioMoments {
  double mean;
  double variance;
};

// Exact moments of log r over eps ~ N(0, I).
LogRatioMoments log_ratio_stats(const Vec& delta_mu, double sigma, double dt);

// -delta_mu . eps, computed directly.
double rationorm(const Vec& delta_mu, const Vec& eps, double sigma, double dt);

// flow_grpo: 1 + eta^2/2; dance_grpo: 1 + eta^2 (1-t) / (2t).
double beta_const(ScheduleVariant schedule, double t, double eta);

// flow_grpo: 1/dt; dance_grpo: beta/dt.
double delta_factor(ScheduleVariant schedule, double t, double dt, double eta);

struct VariantRatio {
  double log_ratio;  // the value that is exponentiated and clipped
  double reweight;   // multiplies the step's surrogate term
};

VariantRatio variant_log_ratio(const RatioVariant& variant, const StepGeometry& geom, const Vec& delta_mu,
                               const Vec& eps);

// d(log ratio used) / d(mu_theta), with mu_old held fixed.
Vec variant_log_ratio_grad_mu(const RatioVariant& variant, const StepGeometry& geom, const Vec& delta_mu,
                              const Vec& eps);

// Per-variant gradient scale with respect to the velocity output:
// reweight * d(log ratio used)/dv. Multiplying by r * A / T gives the step's
// objective gradient with respect to v when the clip gate is open.
Vec variant_grad_scale(const RatioVariant& variant, const StepGeometry& geom, const Vec& delta_mu,
                       const Vec& eps);

struct RatioRecord {
  int k = 0;
  int epoch = 0;
  double log_r = 0.0;
  double log_r_hat = 0.0;
  double log_r_used = 0.0;
  double r_used = 1.0;
  Vec delta_mu;
  Vec grad_scale_factor;
  double grad_norm = 0.0;  // |dJ/dv| actually applied for this step
  bool clipped_hi = false;
  bool clipped_lo = false;
};

}  // namespace flowguard
