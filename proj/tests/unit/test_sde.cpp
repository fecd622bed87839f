#include "doctest.h"
#include "helpers.hpp"

#include "flowguard/errors.hpp"
#include "flowguard/sde.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <string>

using namespace flowguard;
using fgtest::vec;

namespace {

NetParams small_net(std::uint64_t seed) {
  NetArch a;
  a.hidden = {16, 16};
  return NetParams::init(a, seed);
}

}  // namespace

TEST_SUITE("sde") {
  TEST_CASE("sigma schedule examples") {
    CHECK(schedule_sigma(ScheduleVariant::flow_grpo, 0.7, 0.5) == doctest::Approx(0.7));
    CHECK(schedule_sigma(ScheduleVariant::flow_grpo, 0.7, 0.8) == doctest::Approx(1.4));
    for (double t : {0.1, 0.5, 0.9}) CHECK(schedule_sigma(ScheduleVariant::dance_grpo, 0.3, t) == 0.3);
  }

  TEST_CASE("grid is decreasing, clamped, uniform") {
    const auto s = build_schedule("flow_grpo", 0.7, 8);
    REQUIRE(s.grid.size() == 8);
    CHECK(s.grid.front().t == doctest::Approx(1.0 - 1e-3));
    for (std::size_t k = 0; k < s.grid.size(); ++k) {
      CHECK(s.grid[k].dt == doctest::Approx(0.125));
      CHECK(s.grid[k].t > 0.0);
      CHECK(s.grid[k].t < 1.0);
      CHECK(s.grid[k].sigma == doctest::Approx(s.sigma(s.grid[k].t)));
      if (k > 0) CHECK(s.grid[k].t < s.grid[k - 1].t);
    }
    CHECK_THROWS_AS(build_schedule("ddim", 0.7, 8), ConfigError);
    CHECK_THROWS_AS(build_schedule("flow_grpo", -1.0, 8), ConfigError);
  }

  TEST_CASE("zero velocity drift mean example") {
    const Vec mu = drift_mean(Vec::Zero(2), vec({1.0, 0.0}), 0.5, 0.125, 0.7);
    CHECK(mu[0] == doctest::Approx(0.93875).epsilon(1e-12));
    CHECK(mu[1] == 0.0);
    const auto p = NetParams::zeros(small_net(0).arch);
    CHECK((mu_theta(p, vec({1.0, 0.0}), 0.5, 0.125, 0.7) - mu).norm() == 0.0);
  }

  TEST_CASE("zero noise reduces to an Euler step and zero dt is the identity") {
    const auto p = small_net(2);
    const Vec x = vec({0.4, -1.1});
    const Vec v = forward(p, {x, 0.3, {}});
    CHECK((mu_theta(p, x, 0.3, 0.1, 0.0) - (x - 0.1 * v)).norm() <= 1e-15);
    CHECK((mu_theta(p, x, 0.3, 0.0, 0.9) - x).norm() == 0.0);
  }

  TEST_CASE("drift derivative in v") {
    const Vec x = vec({0.2, 0.5});
    const Vec v = vec({-0.3, 0.8});
    const double t = 0.35, dt = 0.125, sigma = 0.9, h = 1e-6;
    Vec vp = v;
    vp[0] += h;
    const double slope = (drift_mean(vp, x, t, dt, sigma)[0] - drift_mean(v, x, t, dt, sigma)[0]) / h;
    CHECK(slope == doctest::Approx(-drift_v_coefficient(t, sigma) * dt).epsilon(1e-6));
  }

  TEST_CASE("stored steps satisfy x_next = mu_old + sigma sqrt(dt) eps") {
    const auto p = small_net(3);
    const auto s = build_schedule("flow_grpo", 0.7, 8);
    const auto g = rollout_group(p, s, {}, 6, {1, 2, 3});
    REQUIRE(g.trajectories.size() == 6);
    for (const auto& tr : g.trajectories) {
      for (std::size_t k = 0; k < tr.steps.size(); ++k) {
        const auto& st = tr.steps[k];
        CHECK((st.mu_old - drift_mean(st.v_old, st.x_t, st.t, st.dt, st.sigma)).norm() == 0.0);
        const Vec next = k + 1 < tr.steps.size() ? tr.steps[k + 1].x_t : tr.x0_final;
        CHECK((next - (st.mu_old + st.sigma * std::sqrt(st.dt) * st.eps)).norm() <= 1e-14);
      }
    }
  }

  TEST_CASE("dance schedule shares x1 within a group and flow does not") {
    const auto p = small_net(4);
    const auto dance = rollout_group(p, build_schedule("dance_grpo", 0.3, 8), {}, 4, {0, 0, 0});
    for (const auto& tr : dance.trajectories) CHECK(tr.x1 == dance.trajectories[0].x1);
    const auto flow = rollout_group(p, build_schedule("flow_grpo", 0.7, 8), {}, 4, {0, 0, 0});
    CHECK(flow.trajectories[0].x1 != flow.trajectories[1].x1);
  }

  TEST_CASE("zero noise with shared x1 gives coinciding trajectories") {
    const auto p = small_net(5);
    const auto g = rollout_group(p, build_schedule("dance_grpo", 0.0, 8), {}, 5, {9, 1, 2});
    for (const auto& tr : g.trajectories) CHECK(tr.x0_final == g.trajectories[0].x0_final);
  }

  TEST_CASE("rollouts are deterministic and thread-count independent") {
    const auto p = small_net(6);
    const auto s = build_schedule("flow_grpo", 0.7, 8);
    const auto a = rollout_group(p, s, {}, 16, {3, 4, 5}, 1);
    const auto b = rollout_group(p, s, {}, 16, {3, 4, 5}, 1);
    const auto c = rollout_group(p, s, {}, 16, {3, 4, 5}, 4);
    for (std::size_t m = 0; m < a.trajectories.size(); ++m) {
      CHECK(a.trajectories[m].x0_final == b.trajectories[m].x0_final);
      CHECK(a.trajectories[m].x0_final == c.trajectories[m].x0_final);
    }
    const auto o1 = ode_sample(p, 32, 20, 8, {}, 1);
    const auto o2 = ode_sample(p, 32, 20, 8, {}, 3);
    for (std::size_t i = 0; i < o1.size(); ++i) CHECK(o1[i] == o2[i]);
  }

  TEST_CASE("non-finite states are flagged and excluded") {
    auto p = small_net(7);
    p.layers.back().bias = vec({std::numeric_limits<double>::infinity(), 0.0});
    const auto g = rollout_group(p, build_schedule("flow_grpo", 0.7, 8), {}, 4, {0, 0, 0});
    CHECK(g.trajectories.empty());
    CHECK(g.invalid_count == 4);
  }

  TEST_CASE("trajectory dump has one row per step") {
    const auto dir = fgtest::scratch_dir("sde_dump");
    const auto p = small_net(8);
    std::vector<RolloutGroup> groups = {rollout_group(p, build_schedule("flow_grpo", 0.7, 8), {}, 3, {0, 0, 0})};
    write_trajectory_dump(groups, dir / "t.csv");
    std::ifstream is(dir / "t.csv");
    std::string header;
    std::getline(is, header);
    CHECK(header.rfind("group,member,k,t,dt,sigma_t,eps_0", 0) == 0);
    int rows = 0;
    for (std::string line; std::getline(is, line);) ++rows;
    CHECK(rows == 3 * 8);
  }
}
