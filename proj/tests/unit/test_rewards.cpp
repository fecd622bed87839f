#include "doctest.h"
#include "helpers.hpp"

#include "flowguard/errors.hpp"
#include "flowguard/rewards.hpp"

#include <cmath>
#include <numbers>

using namespace flowguard;
using fgtest::vec;

TEST_SUITE("rewards") {
  TEST_CASE("proxy reward examples") {
    ProxyReward proxy{vec({3.0, 1.0}), 2.0};
    CHECK(proxy_reward(vec({3.0, 1.0}), proxy) == 1.0);
    CHECK(proxy_reward(vec({3.0, 1.0 + std::sqrt(2.0)}), proxy) == doctest::Approx(std::exp(-1.0)));
    CHECK(proxy_reward(vec({300.0, 1.0}), proxy) >= 0.0);
  }

  TEST_CASE("attractor sits off-manifold between modes 0 and 1") {
    const auto ds = ToyDataset::ring(8, 4.0, 0.05);
    const auto proxy = ProxyReward::between_modes(ds);
    CHECK(proxy.attractor.norm() == doctest::Approx(1.3 * 4.0));
    const double angle = std::atan2(proxy.attractor[1], proxy.attractor[0]);
    CHECK(angle == doctest::Approx(std::numbers::pi / 8.0));
    proxy.validate(ds);
    ProxyReward on_mode{ds.centers[2], 1.0};
    CHECK_THROWS_AS(on_mode.validate(ds), ConfigError);
  }

  TEST_CASE("gold score is invariant to rotating samples and reference by a mode step") {
    const auto ds = ToyDataset::ring(8, 4.0, 0.05);
    const auto gold = GoldScore::make(ds, 3.0 * ds.mode_std(), 512, 5);
    Rng rng = make_stream({1});
    std::vector<Vec> samples;
    std::vector<Vec> rotated;
    const double a = 2.0 * std::numbers::pi / 8.0;
    for (int i = 0; i < 256; ++i) {
      const Vec x = ds.sample(rng).x + 0.3 * standard_normal(rng, 2);
      samples.push_back(x);
      rotated.push_back(vec({std::cos(a) * x[0] - std::sin(a) * x[1], std::sin(a) * x[0] + std::cos(a) * x[1]}));
    }
    const auto g1 = gold_score(samples, gold);
    const auto g2 = gold_score(rotated, gold);
    CHECK(g1.log_density == doctest::Approx(g2.log_density).epsilon(1e-10));
    CHECK(g1.mode_coverage == g2.mode_coverage);
  }

  TEST_CASE("true samples score about 1") {
    const auto ds = ToyDataset::ring(8, 4.0, 0.05);
    const auto gold = GoldScore::make(ds, 3.0 * ds.mode_std(), 1024, 5);
    Rng rng = make_stream({99});
    std::vector<Vec> samples;
    for (int i = 0; i < 1024; ++i) samples.push_back(ds.sample(rng).x);
    const auto g = gold_score(samples, gold);
    CHECK(std::abs(g.composite - 1.0) <= 0.1);
    CHECK(g.mode_coverage == 1.0);
  }

  TEST_CASE("collapsed samples: one mode gives coverage 1/K, the attractor gives low density") {
    const auto ds = ToyDataset::ring(8, 4.0, 0.05);
    const auto gold = GoldScore::make(ds, 3.0 * ds.mode_std(), 1024, 5);
    const std::vector<Vec> at_mode(64, ds.centers[3]);
    CHECK(gold_score(at_mode, gold).mode_coverage == doctest::Approx(1.0 / 8.0));
    const auto proxy = ProxyReward::between_modes(ds);
    const std::vector<Vec> hacked(64, proxy.attractor);
    const auto g = gold_score(hacked, gold);
    CHECK(g.log_density < gold.ref_log_density - 5.0);
    CHECK(g.mode_coverage <= 1.0 / 8.0);
    CHECK(g.composite < 0.1);
    for (const auto& x : hacked) CHECK(proxy_reward(x, proxy) == 1.0);
  }

  TEST_CASE("invalid inputs") {
    const auto ds = ToyDataset::ring(8);
    const auto gold = GoldScore::make(ds, 1.0, 64, 1);
    CHECK_THROWS_AS(gold_score(std::vector<Vec>{}, gold), DataError);
    CHECK_THROWS_AS(GoldScore::make(ds, 0.0, 64, 1), ConfigError);
    ProxyReward bad{vec({10.0, 10.0}), 0.0};
    CHECK_THROWS_AS(bad.validate(ds), ConfigError);
  }
}
