#include "oracle/oracle.hpp"

#include "flowguard/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace flowguard::oracle {

bool Estimate::within(double target, double k) const {
  const double gap = std::abs(value - target);
  if (se == 0.0) return gap == 0.0;
  return gap <= k * se;
}

SampleMoments sample_moments(std::span<const double> xs) {
  if (xs.size() < 2) throw DataError("sample_moments: need at least 2 samples");
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double m2 = 0.0;
  double m4 = 0.0;
  for (double x : xs) {
    const double d = x - mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m4 /= n;
  SampleMoments out;
  out.mean = {mean, std::sqrt(m2 / n)};
  out.variance = {m2, std::sqrt(std::max(m4 - m2 * m2, 0.0) / n)};
  return out;
}

double gaussian_log_density(const Vec& x, const Vec& mu, double s2) {
  const double d = static_cast<double>(x.size());
  double sq = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) sq += (x[i] - mu[i]) * (x[i] - mu[i]);
  return -0.5 * sq / s2 - 0.5 * d * std::log(2.0 * std::numbers::pi * s2);
}

TwoGaussianEnv::TwoGaussianEnv(Vec mu_old, Vec mu_theta, double sigma, double dt)
    : mu_old_(std::move(mu_old)), mu_theta_(std::move(mu_theta)), sigma_(sigma), dt_(dt) {
  if (mu_old_.size() != mu_theta_.size()) throw ConfigError("TwoGaussianEnv: mean dimensions differ");
  if (!(sigma_ > 0.0) || !(dt_ > 0.0)) throw ConfigError("TwoGaussianEnv: sigma and dt must be > 0");
}

TwoGaussianEnv TwoGaussianEnv::from_delta(const Vec& delta_mu, double sigma, double dt) {
  Vec mu_old = Vec::Zero(delta_mu.size());
  return {mu_old, mu_old - delta_mu, sigma, dt};
}

double TwoGaussianEnv::log_ratio(const Vec& eps) const {
  const double s2 = sigma_ * sigma_ * dt_;
  Vec x(mu_old_.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = mu_old_[i] + sigma_ * std::sqrt(dt_) * eps[i];
  return gaussian_log_density(x, mu_theta_, s2) - gaussian_log_density(x, mu_old_, s2);
}

TwoGaussianEnv TwoGaussianEnv::swapped() const { return {mu_theta_, mu_old_, sigma_, dt_}; }

TwoGaussianEnv two_gaussian_env(const Vec& delta_mu, double sigma, double dt) {
  return TwoGaussianEnv::from_delta(delta_mu, sigma, dt);
}

RatioMomentsMC mc_ratio_moments(const Vec& delta_mu, double sigma, double dt, long n, Rng& rng) {
  if (n < 10000) throw ConfigError("mc_ratio_moments: need N >= 1e4");
  const auto env = two_gaussian_env(delta_mu, sigma, dt);
  const int d = static_cast<int>(delta_mu.size());
  std::vector<double> log_r(static_cast<std::size_t>(n));
  std::vector<double> r(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    const double lr = env.log_ratio(standard_normal(rng, d));
    log_r[static_cast<std::size_t>(i)] = lr;
    r[static_cast<std::size_t>(i)] = std::exp(lr);
  }
  const auto lm = sample_moments(log_r);
  const auto rm = sample_moments(r);
  return {lm.mean, lm.variance, rm.mean, n};
}

NetGrads fd_gradient(const LossFn& loss, const NetParams& params, double h) {
  if (!(h >= 1e-6 && h <= 1e-4)) throw ConfigError("fd_gradient: step size must lie in [1e-6, 1e-4]");
  NetParams probe = params;
  NetGrads grads = NetGrads::zeros_like(params);
  for (std::size_t i = 0; i < params.num_scalars(); ++i) {
    const double base = params.scalar(i);
    probe.scalar(i) = base + h;
    const double up = loss(probe);
    probe.scalar(i) = base - h;
    const double down = loss(probe);
    probe.scalar(i) = base;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw DivergenceError("fd_gradient: non-finite loss at perturbed parameter " + std::to_string(i));
    }
    grads.scalar(i) = (up - down) / (2.0 * h);
  }
  return grads;
}

double max_relative_error(const LayerStack& a, const LayerStack& b, double floor) {
  const auto fa = a.flatten();
  const auto fb = b.flatten();
  if (fa.size() != fb.size()) throw ConfigError("max_relative_error: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    const double scale = std::max({std::abs(fa[i]), std::abs(fb[i]), floor});
    worst = std::max(worst, std::abs(fa[i] - fb[i]) / scale);
  }
  return worst;
}

double norm_relative_error(const LayerStack& a, const LayerStack& b, double floor) {
  const auto fa = a.flatten();
  const auto fb = b.flatten();
  if (fa.size() != fb.size()) throw ConfigError("norm_relative_error: size mismatch");
  double diff = 0.0;
  double ref = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    diff += (fa[i] - fb[i]) * (fa[i] - fb[i]);
    ref += fb[i] * fb[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), floor);
}

namespace {

Vec mean_from_v(const Vec& v, const Transition& tr) {
  const double a = tr.sigma * tr.sigma / (2.0 * tr.t);
  Vec mu(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double drift = v[i] + a * (tr.x_t[i] + (1.0 - tr.t) * v[i]);
    mu[i] = tr.x_t[i] - drift * tr.dt;
  }
  return mu;
}

}  // namespace

double direct_log_ratio(const Vec& mu, const Transition& tr, VariantKind variant) {
  const TwoGaussianEnv env(tr.mu_old, mu, tr.sigma, tr.dt);
  const double direct = env.log_ratio(tr.eps);
  double sq = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) sq += (tr.mu_old[i] - mu[i]) * (tr.mu_old[i] - mu[i]);
  const double bias = sq / (2.0 * tr.sigma * tr.sigma * tr.dt);
  switch (variant) {
    case VariantKind::baseline:
    case VariantKind::temp_reweight:
      return direct;
    case VariantKind::mean_revised:
      return direct + bias;
    case VariantKind::rationorm:
    case VariantKind::grpo_guard:
      return tr.sigma * std::sqrt(tr.dt) * (direct + bias);
  }
  return direct;
}

namespace {

double weight(const Transition& tr, const ObjectiveSpec& spec) {
  switch (spec.variant) {
    case VariantKind::temp_reweight:
      return tr.sigma * std::sqrt(tr.dt);
    case VariantKind::grpo_guard:
      if (spec.schedule == ScheduleVariant::flow_grpo) return 1.0 / tr.dt;
      return (1.0 + spec.eta * spec.eta * (1.0 - tr.t) / (2.0 * tr.t)) / tr.dt;
    default:
      return 1.0;
  }
}

}  // namespace

Vec step_mean(const NetParams& params, const Transition& tr) {
  return mean_from_v(forward(params, {tr.x_t, tr.t, tr.c}), tr);
}

double step_objective_from_v(const Vec& v, const Transition& tr, const ObjectiveSpec& spec) {
  const double r = std::exp(direct_log_ratio(mean_from_v(v, tr), tr, spec.variant));
  const double lo = 1.0 - spec.clip_range;
  const double hi = 1.0 + spec.clip_range;
  const double clipped = std::min(std::max(r, lo), hi);
  const double surrogate = std::min(r * spec.advantage, clipped * spec.advantage);
  return weight(tr, spec) * surrogate / static_cast<double>(spec.steps);
}

double step_objective(const NetParams& params, const Transition& tr, const ObjectiveSpec& spec) {
  return step_objective_from_v(forward(params, {tr.x_t, tr.t, tr.c}), tr, spec);
}

Vec fd_velocity_gradient(const Vec& v, const Transition& tr, const ObjectiveSpec& spec, double h) {
  Vec grad(v.size());
  Vec probe = v;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    probe[i] = v[i] + h;
    const double up = step_objective_from_v(probe, tr, spec);
    probe[i] = v[i] - h;
    const double down = step_objective_from_v(probe, tr, spec);
    probe[i] = v[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace flowguard::oracle
