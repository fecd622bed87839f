#pragma once

// Cross-checks between the library and the oracles. Each check is
// deterministic for a given seed and reports a single pass/fail line.

#include "flowguard/ratio.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace flowguard::oracle {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct CheckReport {
  std::vector<CheckResult> checks;

  bool all_passed() const;
  // One "PASS name: detail" / "FAIL name: detail" line per check.
  std::string text() const;
};

// Closed-form log ratio against direct density differences over `draws`
// random instances; passes when the worst absolute gap <= tol.
CheckResult check_closed_form(std::uint64_t seed, int draws = 10000, double tol = 1e-9);

// Swapping the two policies with eps fixed: the linear terms cancel and the
// sum equals -|dmu|^2 / (sigma^2 dt).
CheckResult check_swap_identity(std::uint64_t seed, int draws = 1000, double tol = 1e-9);

// Monte Carlo moments of log r and r against the closed-form moments, and
// the strictly negative mean for every nonzero delta_mu.
CheckResult check_ratio_moments(std::uint64_t seed, long samples = 100000);

// Normalized ratio: bitwise independent of (sigma, dt), equal to the rescaled
// raw ratio, and with mean 0 / variance |dmu|^2 at every step of `schedule`.
CheckResult check_rationorm(std::uint64_t seed, const NoiseSchedule& schedule, long samples = 100000);

// Network backward pass on the flow-matching loss against finite differences.
CheckResult check_fm_backward(std::uint64_t seed, double tol = 1e-4);

// Full parameter gradient of one stored transition against finite
// differences of the independently written objective, for every variant and
// timestep. `perturb` > 0 moves params away from params_old.
CheckResult check_policy_fd(std::uint64_t seed, const NoiseSchedule& schedule, double perturb, int configurations,
                            double tol = 1e-4);

// d objective / d v against the per-variant gradient-scale rows
//   baseline       beta (dmu + sigma sqrt(dt) eps) / sigma^2
//   temp_reweight  beta (sqrt(dt) dmu + sigma dt eps) / sigma
//   mean_revised   beta sqrt(dt) eps / sigma
//   rationorm      beta dt eps
//   grpo_guard     beta eps
// (times -r A / T: the mean moves against the velocity). Flow schedule only.
CheckResult check_gradient_scale_rows(std::uint64_t seed, const NoiseSchedule& schedule, double perturb,
                                      int configurations, double tol = 1e-6);

// Everything above with default sizes.
CheckReport run_oracle_checks(std::uint64_t seed);

}  // namespace flowguard::oracle
