#include "flowguard/ratio.hpp"

#include "flowguard/errors.hpp"

#include <cmath>
#include <numbers>

namespace flowguard {

VariantKind parse_variant(std::string_view name) {
  for (auto kind : kAllVariants) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("unknown variant '" + std::string(name) + "' (valid: " + valid_variant_names() + ")");
}

std::string_view to_string(VariantKind kind) {
  switch (kind) {
    case VariantKind::baseline:
      return "baseline";
    case VariantKind::temp_reweight:
      return "temp_reweight";
    case VariantKind::mean_revised:
      return "mean_revised";
    case VariantKind::rationorm:
      return "rationorm";
    case VariantKind::grpo_guard:
      return "grpo_guard";
  }
  return "?";
}

std::string valid_variant_names() {
  std::string out;
  for (auto kind : kAllVariants) {
    if (!out.empty()) out += ", ";
    out += to_string(kind);
  }
  return out;
}

double default_clip_range(VariantKind kind) {
  switch (kind) {
    case VariantKind::rationorm:
    case VariantKind::grpo_guard:
      return 2e-6;
    default:
      return 1e-4;
  }
}

void RatioVariant::validate() const {
  if (!(clip_range > 0.0 && clip_range < 1.0)) throw ConfigError("clip_range must lie in (0, 1)");
}

StepGeometry StepGeometry::of(const NoiseSchedule& schedule, const GridPoint& point) {
  return {schedule.variant, schedule.eta, point.t, point.dt, point.sigma};
}

namespace {

void require_positive_scale(double sigma, double dt) {
  if (!(sigma > 0.0) || !(dt > 0.0)) throw ConfigError("ratio: sigma and dt must be > 0");
}

}  // namespace

double log_step_density(const Vec& mu, double sigma, double dt, const Vec& x_next) {
  require_positive_scale(sigma, dt);
  if (mu.size() != x_next.size()) throw ConfigError("log_step_density: dimension mismatch");
  const double var = sigma * sigma * dt;
  const double c_t = 0.5 * static_cast<double>(mu.size()) * std::log(2.0 * std::numbers::pi * var);
  return -(x_next - mu).squaredNorm() / (2.0 * var) - c_t;
}

double log_ratio_closed_form(const Vec& delta_mu, const Vec& eps, double sigma, double dt) {
  require_positive_scale(sigma, dt);
  const double linear = -delta_mu.dot(eps) / (sigma * std::sqrt(dt));
#ifdef FLOWGUARD_MUTATE_DROP_QUADRATIC
  return linear;
#else
  const double quadratic = -delta_mu.squaredNorm() / (2.0 * sigma * sigma * dt);
  return quadratic + linear;
#endif
}

LogRatioMoments log_ratio_stats(const Vec& delta_mu, double sigma, double dt) {
  require_positive_scale(sigma, dt);
  const double s2dt = sigma * sigma * dt;
  const double sq = delta_mu.squaredNorm();
  return {-sq / (2.0 * s2dt), sq / s2dt};
}

double rationorm(const Vec& delta_mu, const Vec& eps, double sigma, double dt) {
  require_positive_scale(sigma, dt);
  return -delta_mu.dot(eps);
}

double beta_const(ScheduleVariant schedule, double t, double eta) {
  switch (schedule) {
    case ScheduleVariant::flow_grpo:
      return 1.0 + eta * eta / 2.0;
    case ScheduleVariant::dance_grpo:
      return 1.0 + eta * eta * (1.0 - t) / (2.0 * t);
  }
  throw ConfigError("unknown schedule variant");
}

double delta_factor(ScheduleVariant schedule, double t, double dt, double eta) {
  if (!(dt > 0.0)) throw ConfigError("delta_factor: dt must be > 0");
  switch (schedule) {
    case ScheduleVariant::flow_grpo:
      return 1.0 / dt;
    case ScheduleVariant::dance_grpo:
      return beta_const(schedule, t, eta) / dt;
  }
  throw ConfigError("unknown schedule variant");
}

VariantRatio variant_log_ratio(const RatioVariant& variant, const StepGeometry& g, const Vec& delta_mu,
                               const Vec& eps) {
  switch (variant.kind) {
    case VariantKind::baseline:
      return {log_ratio_closed_form(delta_mu, eps, g.sigma, g.dt), 1.0};
    case VariantKind::temp_reweight:
      return {log_ratio_closed_form(delta_mu, eps, g.sigma, g.dt), g.sigma * std::sqrt(g.dt)};
    case VariantKind::mean_revised:
      // quadratic bias removed analytically; only the linear term remains
      require_positive_scale(g.sigma, g.dt);
      return {-delta_mu.dot(eps) / (g.sigma * std::sqrt(g.dt)), 1.0};
    case VariantKind::rationorm:
      return {rationorm(delta_mu, eps, g.sigma, g.dt), 1.0};
    case VariantKind::grpo_guard:
      return {rationorm(delta_mu, eps, g.sigma, g.dt), delta_factor(g.schedule, g.t, g.dt, g.eta)};
  }
  throw ConfigError("unknown variant");
}

Vec variant_log_ratio_grad_mu(const RatioVariant& variant, const StepGeometry& g, const Vec& delta_mu,
                              const Vec& eps) {
  require_positive_scale(g.sigma, g.dt);
  switch (variant.kind) {
    case VariantKind::baseline:
    case VariantKind::temp_reweight:
      return (delta_mu + (g.sigma * std::sqrt(g.dt)) * eps) / (g.sigma * g.sigma * g.dt);
    case VariantKind::mean_revised:
      return eps / (g.sigma * std::sqrt(g.dt));
    case VariantKind::rationorm:
    case VariantKind::grpo_guard:
      return eps;
  }
  throw ConfigError("unknown variant");
}

Vec variant_grad_scale(const RatioVariant& variant, const StepGeometry& g, const Vec& delta_mu, const Vec& eps) {
  const double reweight = variant_log_ratio(variant, g, delta_mu, eps).reweight;
  // d mu / d v = -(1 + sigma^2 (1-t)/(2t)) dt
  const double dmu_dv = -drift_v_coefficient(g.t, g.sigma) * g.dt;
  return (reweight * dmu_dv) * variant_log_ratio_grad_mu(variant, g, delta_mu, eps);
}

}  // namespace flowguard
