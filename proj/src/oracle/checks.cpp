#include "oracle/checks.hpp"

#include "flowguard/flow_pretrain.hpp"
#include "flowguard/grpo.hpp"
#include "oracle/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace flowguard::oracle {

namespace {

std::string fmt(const char* format, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Vec uniform_vec(Rng& rng, int dim, double lo, double hi) {
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = uniform(rng, lo, hi);
  return v;
}

NetParams perturbed(const NetParams& base, double scale, Rng& rng) {
  NetParams p = base;
  if (scale == 0.0) return p;
  std::normal_distribution<double> normal(0.0, scale);
  for (std::size_t i = 0; i < p.num_scalars(); ++i) p.scalar(i) += normal(rng);
  return p;
}

// A stored transition at grid point k with mu_old from params_old.
struct Case {
  Transition tr;
  TrajectoryStep step;
};

Case make_case(const NetParams& params_old, const NoiseSchedule& schedule, int k, const Vec& c, Rng& rng) {
  const auto& g = schedule.grid[static_cast<std::size_t>(k)];
  const int d = params_old.arch.data_dim;
  Case out;
  out.tr.x_t = 1.5 * standard_normal(rng, d);
  out.tr.eps = standard_normal(rng, d);
  out.tr.c = c;
  out.tr.t = g.t;
  out.tr.dt = g.dt;
  out.tr.sigma = g.sigma;
  out.tr.mu_old = step_mean(params_old, out.tr);

  out.step.k = k;
  out.step.t = g.t;
  out.step.dt = g.dt;
  out.step.sigma = g.sigma;
  out.step.x_t = out.tr.x_t;
  out.step.eps = out.tr.eps;
  out.step.mu_old = out.tr.mu_old;
  out.step.v_old = forward(params_old, {out.tr.x_t, out.tr.t, c});
  return out;
}

Vec table_row(VariantKind kind, double beta, const Vec& dmu, const Vec& eps, double sigma, double dt) {
  const double sdt = std::sqrt(dt);
  switch (kind) {
    case VariantKind::baseline:
      return beta * (dmu + sigma * sdt * eps) / (sigma * sigma);
    case VariantKind::temp_reweight:
      return beta * (sdt * dmu + sigma * dt * eps) / sigma;
    case VariantKind::mean_revised:
      return beta * sdt * eps / sigma;
    case VariantKind::rationorm:
      return beta * dt * eps;
    case VariantKind::grpo_guard:
      return beta * eps;
  }
  return eps;
}

}  // namespace

bool CheckReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::string CheckReport::text() const {
  std::ostringstream os;
  for (const auto& c : checks) os << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
  os << (all_passed() ? "all oracle checks passed" : "oracle checks FAILED") << '\n';
  return os.str();
}

CheckResult check_closed_form(std::uint64_t seed, int draws, double tol) {
  Rng rng = make_stream({seed, 0xc105ed});
  double worst = 0.0;
  for (int i = 0; i < draws; ++i) {
    const int d = 1 + static_cast<int>(rng() % 4);
    const Vec mu_old = uniform_vec(rng, d, -2.0, 2.0);
    const Vec dmu = uniform_vec(rng, d, -0.5, 0.5);
    const Vec eps = standard_normal(rng, d);
    const double sigma = uniform(rng, 0.1, 2.0);
    const double dt = uniform(rng, 1.0 / 64.0, 0.25);
    const TwoGaussianEnv env(mu_old, mu_old - dmu, sigma, dt);
    worst = std::max(worst, std::abs(log_ratio_closed_form(dmu, eps, sigma, dt) - env.log_ratio(eps)));
  }
  return {"closed_form_equivalence", worst <= tol,
          fmt("%d draws, max |closed - direct| = %.3e (tol %.0e)", draws, worst, tol)};
}

CheckResult check_swap_identity(std::uint64_t seed, int draws, double tol) {
  Rng rng = make_stream({seed, 0x5a4e});
  double worst_direct = 0.0;
  double worst_closed = 0.0;
  for (int i = 0; i < draws; ++i) {
    const Vec dmu = uniform_vec(rng, 2, -0.5, 0.5);
    const Vec eps = standard_normal(rng, 2);
    const double sigma = uniform(rng, 0.1, 2.0);
    const double dt = uniform(rng, 1.0 / 64.0, 0.25);
    const double expected = -dmu.squaredNorm() / (sigma * sigma * dt);
    const auto env = two_gaussian_env(dmu, sigma, dt);
    worst_direct = std::max(worst_direct, std::abs(env.log_ratio(eps) + env.swapped().log_ratio(eps) - expected));
    const double closed = log_ratio_closed_form(dmu, eps, sigma, dt) + log_ratio_closed_form(-dmu, eps, sigma, dt);
    worst_closed = std::max(worst_closed, std::abs(closed - expected));
  }
  const double worst = std::max(worst_direct, worst_closed);
  return {"swap_identity", worst <= tol,
          fmt("%d draws, max gap direct %.3e closed %.3e (tol %.0e)", draws, worst_direct, worst_closed, tol)};
}

CheckResult check_ratio_moments(std::uint64_t seed, long samples) {
  struct Instance {
    Vec dmu;
    double sigma;
    double dt;
  };
  const std::vector<Instance> cases = {
      {Vec::Zero(2), 0.5, 0.125},
      {(Vec(2) << 0.1, 0.0).finished(), 0.5, 0.125},
      {(Vec(2) << 0.05, -0.03).finished(), 0.7, 0.125},
      {(Vec(2) << 0.02, 0.01).finished(), 0.3, 0.0625},
      {(Vec(2) << 0.2, 0.1).finished(), 2.0, 0.25},
      {(Vec(3) << 0.01, 0.02, -0.02).finished(), 0.15, 0.125},
  };
  bool ok = true;
  std::ostringstream detail;
  int idx = 0;
  for (const auto& c : cases) {
    Rng rng = make_stream({seed, 0x303e47, static_cast<std::uint64_t>(idx)});
    const auto mc = mc_ratio_moments(c.dmu, c.sigma, c.dt, samples, rng);
    const auto exact = log_ratio_stats(c.dmu, c.sigma, c.dt);
    bool pass = mc.mean.within(exact.mean) && mc.variance.within(exact.variance) && mc.mean_of_r.within(1.0);
    if (c.dmu.squaredNorm() > 0.0) pass = pass && mc.mean.value < 0.0 && exact.mean < 0.0;
    ok = ok && pass;
    detail << fmt("%s[%d] mean %.4f/%.4f var %.4f/%.4f E[r] %.4f", idx ? "; " : "", idx, mc.mean.value, exact.mean,
                  mc.variance.value, exact.variance, mc.mean_of_r.value);
    ++idx;
  }
  return {"ratio_moments", ok, detail.str()};
}

CheckResult check_rationorm(std::uint64_t seed, const NoiseSchedule& schedule, long samples) {
  Rng rng = make_stream({seed, 0x4a7e});
  const Vec dmu = (Vec(2) << 0.3, -0.2).finished();
  std::vector<Vec> eps(static_cast<std::size_t>(samples));
  for (auto& e : eps) e = standard_normal(rng, 2);

  bool invariant = true;
  double worst_rescaled = 0.0;
  bool moments_ok = true;
  std::vector<double> reference;
  for (const auto& g : schedule.grid) {
    std::vector<double> vals(eps.size());
    for (std::size_t i = 0; i < eps.size(); ++i) {
      vals[i] = rationorm(dmu, eps[i], g.sigma, g.dt);
      if (i < 1000) {
        const double rescaled = g.sigma * std::sqrt(g.dt) *
                                (log_ratio_closed_form(dmu, eps[i], g.sigma, g.dt) +
                                 dmu.squaredNorm() / (2.0 * g.sigma * g.sigma * g.dt));
        worst_rescaled = std::max(worst_rescaled, std::abs(rescaled - vals[i]));
      }
    }
    if (reference.empty()) {
      reference = vals;
    } else {
      invariant = invariant && vals == reference;
    }
    const auto m = sample_moments(vals);
    moments_ok = moments_ok && m.mean.within(0.0) && m.variance.within(dmu.squaredNorm());
  }
  const auto m = sample_moments(reference);
  const bool ok = invariant && moments_ok && worst_rescaled <= 1e-10;
  return {"rationorm_law", ok,
          fmt("bitwise invariant across %zu steps: %s; mean %.5f var %.5f (target %.5f); rescaled gap %.2e",
              schedule.grid.size(), invariant ? "yes" : "no", m.mean.value, m.variance.value, dmu.squaredNorm(),
              worst_rescaled)};
}

CheckResult check_fm_backward(std::uint64_t seed, double tol) {
  const NetParams params = NetParams::init(NetArch{2, 0, {16, 16}}, seed);
  const ToyDataset ds = ToyDataset::ring(4, 2.0, 0.05, 2);
  Rng rng = make_stream({seed, 0xf3});
  std::vector<SamplePair> batch;
  for (int i = 0; i < 8; ++i) batch.push_back(sample_pair(ds, rng));
  const auto analytic = fm_loss_and_grads(params, batch);
  const auto numeric = fd_gradient([&](const NetParams& p) { return fm_loss_and_grads(p, batch).loss; }, params);
  const double err = max_relative_error(analytic.grads, numeric, 1e-7);
  return {"fm_backward_vs_fd", err <= tol, fmt("max relative error %.3e (tol %.0e)", err, tol)};
}

CheckResult check_policy_fd(std::uint64_t seed, const NoiseSchedule& schedule, double perturb, int configurations,
                            double tol) {
  double worst = 0.0;
  for (int n = 0; n < configurations; ++n) {
    Rng rng = make_stream({seed, 0x9f0d, static_cast<std::uint64_t>(n)});
    const int cond = n % 2 == 0 ? 0 : 3;
    const NetParams params_old = NetParams::init(NetArch{2, cond, {16, 16}}, seed + static_cast<std::uint64_t>(n));
    const NetParams params = perturbed(params_old, perturb, rng);
    const Vec c = cond > 0 ? Vec::Unit(cond, n % cond) : Vec();
    const int k = static_cast<int>(rng() % static_cast<std::uint64_t>(schedule.steps));
    const Case cs = make_case(params_old, schedule, k, c, rng);
    const double adv = uniform(rng, -2.0, 2.0);
    for (auto kind : kAllVariants) {
      // wide band: finite differences must not straddle a clip boundary
      const RatioVariant variant{kind, 0.5};
      NetGrads analytic = NetGrads::zeros_like(params);
      policy_grads_for_step(params, cs.step, adv, variant, schedule, c, &analytic);
      const ObjectiveSpec spec{kind, schedule.variant, schedule.eta, variant.clip_range, adv, schedule.steps};
      const auto numeric = fd_gradient([&](const NetParams& p) { return step_objective(p, cs.tr, spec); }, params);
      worst = std::max(worst, norm_relative_error(analytic, numeric));
    }
  }
  return {perturb > 0.0 ? "policy_grad_vs_fd_off_policy" : "policy_grad_vs_fd_on_policy", worst <= tol,
          fmt("%d configurations x 5 variants, max relative error %.3e (tol %.0e)", configurations, worst, tol)};
}

CheckResult check_gradient_scale_rows(std::uint64_t seed, const NoiseSchedule& schedule, double perturb,
                                      int configurations, double tol) {
  if (schedule.variant != ScheduleVariant::flow_grpo) {
    return {"gradient_scale_rows", false, "only defined for the flow_grpo schedule"};
  }
  const double beta = 1.0 + schedule.eta * schedule.eta / 2.0;
  double worst = 0.0;
  for (int n = 0; n < configurations; ++n) {
    Rng rng = make_stream({seed, 0x7ab1e, static_cast<std::uint64_t>(n)});
    const NetParams params_old = NetParams::init(NetArch{2, 0, {16, 16}}, seed + 7919u * static_cast<std::uint64_t>(n));
    const NetParams params = perturbed(params_old, perturb, rng);
    const int k = n % schedule.steps;
    const Case cs = make_case(params_old, schedule, k, Vec(), rng);
    const double adv = uniform(rng, -2.0, 2.0);
    const Vec mu = step_mean(params, cs.tr);
    const Vec dmu = cs.tr.mu_old - mu;
    for (auto kind : kAllVariants) {
      const RatioVariant variant{kind, 0.5};
      const auto sg = policy_grads_for_step(params, cs.step, adv, variant, schedule, Vec());
      const double r = std::exp(direct_log_ratio(mu, cs.tr, kind));
      const Vec expected = -(r * adv / schedule.steps) *
                           table_row(kind, beta, dmu, cs.tr.eps, cs.tr.sigma, cs.tr.dt);
      worst = std::max(worst, (sg.grad_v - expected).norm() / std::max(expected.norm(), 1e-300));
    }
  }
  return {perturb > 0.0 ? "gradient_scale_rows_off_policy" : "gradient_scale_rows_on_policy", worst <= tol,
          fmt("%d configurations x 5 variants, max relative error %.3e (tol %.0e)", configurations, worst, tol)};
}

CheckReport run_oracle_checks(std::uint64_t seed) {
  const NoiseSchedule schedule = build_schedule(ScheduleVariant::flow_grpo, 0.7, 8, 1e-3);
  CheckReport report;
  report.checks.push_back(check_closed_form(seed));
  report.checks.push_back(check_swap_identity(seed));
  report.checks.push_back(check_ratio_moments(seed));
  report.checks.push_back(check_rationorm(seed, schedule));
  report.checks.push_back(check_fm_backward(seed));
  report.checks.push_back(check_policy_fd(seed, schedule, 0.0, 20));
  report.checks.push_back(check_policy_fd(seed, schedule, 0.02, 20));
  report.checks.push_back(check_gradient_scale_rows(seed, schedule, 0.0, 40));
  report.checks.push_back(check_gradient_scale_rows(seed, schedule, 0.02, 40));
  return report;
}

}  // namespace flowguard::oracle
