#include "doctest.h"
#include "helpers.hpp"

#include "flowguard/errors.hpp"
#include "flowguard/flow_pretrain.hpp"
#include "flowguard/sde.hpp"
#include "oracle/oracle.hpp"

#include <cmath>

using namespace flowguard;
using fgtest::vec;

namespace {

NetArch arch_for(const ToyDataset& ds, std::vector<int> hidden = {16, 16}) {
  NetArch a;
  a.data_dim = ds.dim();
  a.cond_dim = ds.cond_dim();
  a.hidden = std::move(hidden);
  return a;
}

}  // namespace

TEST_SUITE("flow_pretrain") {
  TEST_CASE("interpolation endpoints and the worked pair") {
    const Vec x0 = vec({1.0, 0.0});
    const Vec x1 = vec({0.0, 1.0});
    CHECK(make_pair(x0, x1, 0.0).xt == x0);
    CHECK(make_pair(x0, x1, 1.0).xt == x1);
    const auto p = make_pair(x0, x1, 0.25);
    CHECK(p.xt[0] == doctest::Approx(0.75));
    CHECK(p.xt[1] == doctest::Approx(0.25));
    CHECK(p.v_target[0] == doctest::Approx(-1.0));
    CHECK(p.v_target[1] == doctest::Approx(1.0));
  }

  TEST_CASE("sampled pairs satisfy the interpolation identity") {
    const auto ds = ToyDataset::ring(8);
    Rng rng = make_stream({3});
    for (int i = 0; i < 200; ++i) {
      const auto p = sample_pair(ds, rng);
      CHECK(p.t >= 0.0);
      CHECK(p.t <= 1.0);
      CHECK((p.xt - ((1.0 - p.t) * p.x0 + p.t * p.x1)).norm() <= 1e-12);
      CHECK((p.v_target - (p.x1 - p.x0)).norm() <= 1e-12);
    }
  }

  TEST_CASE("zero network with |v_target|^2 = 2 gives loss 2") {
    const auto ds = ToyDataset::ring(8);
    const auto p = NetParams::zeros(arch_for(ds));
    std::vector<SamplePair> batch = {make_pair(vec({1.0, 0.0}), vec({0.0, 1.0}), 0.3),
                                     make_pair(vec({0.0, 0.0}), vec({1.0, -1.0}), 0.8)};
    const auto out = fm_loss_and_grads(p, batch);
    CHECK(out.loss == doctest::Approx(2.0).epsilon(1e-14));
  }

  TEST_CASE("perfect fit gives zero loss and zero grads") {
    // The network outputs its bias; every target equals that bias.
    NetArch a;
    a.hidden = {};
    auto p = NetParams::zeros(a);
    p.layers[0].bias = vec({-1.0, 1.0});
    std::vector<SamplePair> batch = {make_pair(vec({1.0, 0.0}), vec({0.0, 1.0}), 0.25),
                                     make_pair(vec({2.0, 3.0}), vec({1.0, 4.0}), 0.6)};
    const auto out = fm_loss_and_grads(p, batch);
    CHECK(out.loss == 0.0);
    CHECK(out.grads.squared_norm() == 0.0);
  }

  TEST_CASE("flow-matching gradient matches finite differences") {
    const auto ds = ToyDataset::ring(4);
    Rng rng = make_stream({5});
    for (int trial = 0; trial < 10; ++trial) {
      const auto p = NetParams::init(arch_for(ds), 40 + static_cast<std::uint64_t>(trial));
      std::vector<SamplePair> batch;
      for (int i = 0; i < 8; ++i) batch.push_back(sample_pair(ds, rng));
      const auto out = fm_loss_and_grads(p, batch);
      const auto fd =
          oracle::fd_gradient([&](const NetParams& q) { return fm_loss_and_grads(q, batch).loss; }, p, 1e-5);
      CHECK(oracle::max_relative_error(out.grads, fd, 1e-6) <= 1e-4);
    }
  }

  TEST_CASE("zero steps returns the initialization unchanged") {
    const auto ds = ToyDataset::ring(8);
    PretrainConfig cfg;
    cfg.steps = 0;
    cfg.init_seed = 12;
    const auto res = pretrain(ds, arch_for(ds), cfg);
    CHECK(res.params.flatten() == NetParams::init(arch_for(ds), 12).flatten());
    CHECK(res.losses.empty());
  }

  TEST_CASE("pretraining is deterministic and lowers the loss") {
    const auto ds = ToyDataset::ring(8);
    PretrainConfig cfg;
    cfg.steps = 300;
    cfg.batch_size = 64;
    const auto a = pretrain(ds, arch_for(ds), cfg);
    const auto b = pretrain(ds, arch_for(ds), cfg);
    CHECK(a.params.flatten() == b.params.flatten());
    double head = 0.0;
    double tail = 0.0;
    for (int i = 0; i < 30; ++i) {
      head += a.losses[static_cast<std::size_t>(i)];
      tail += a.losses[a.losses.size() - 1 - static_cast<std::size_t>(i)];
    }
    CHECK(tail < head);
  }

  TEST_CASE("two-mode mixture after 5k steps: ODE samples within 1 nat of true samples") {
    auto ds = ToyDataset::ring(2, 2.0, 0.05);
    PretrainConfig cfg;
    cfg.steps = 5000;
    cfg.batch_size = 128;
    cfg.lr = 2e-3;
    const auto res = pretrain(ds, arch_for(ds, {64, 64}), cfg);
    const auto samples = ode_sample(res.params, 1024, 50, 77);
    double gen = 0.0;
    for (const auto& x : samples) gen += ds.log_density(x);
    gen /= static_cast<double>(samples.size());
    Rng rng = make_stream({78});
    double ref = 0.0;
    for (int i = 0; i < 1024; ++i) ref += ds.log_density(ds.sample(rng).x);
    ref /= 1024.0;
    MESSAGE("generated " << gen << " nats, true " << ref << " nats");
    CHECK(std::abs(gen - ref) <= 1.0);
  }

  TEST_CASE("invalid settings are configuration errors") {
    const auto ds = ToyDataset::ring(8);
    PretrainConfig cfg;
    cfg.steps = -1;
    CHECK_THROWS_AS(pretrain(ds, arch_for(ds), cfg), ConfigError);
    NetArch wrong = arch_for(ds);
    wrong.data_dim = 3;
    CHECK_THROWS_AS(pretrain(ds, wrong, PretrainConfig{}), ConfigError);
    CHECK_THROWS_AS(fm_loss_and_grads(NetParams::zeros(arch_for(ds)), {}), ConfigError);
  }
}
