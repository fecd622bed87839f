#pragma once

#include "flowguard/net.hpp"
#include "flowguard/random.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace flowguard {

// Isotropic Gaussian mixture used as the data distribution.
struct ToyDataset {
  std::vector<Vec> centers;
  double cov_scale = 0.05;  // per-mode covariance is cov_scale * I
  std::vector<double> weights;
  bool conditional = false;  // condition = one-hot mode label

  // K modes evenly spaced on a circle in the first two coordinates.
  static ToyDataset ring(int modes = 8, double radius = 4.0, double cov_scale = 0.05, int dim = 2);

  int num_modes() const { return static_cast<int>(centers.size()); }
  int dim() const { return centers.empty() ? 0 : static_cast<int>(centers.front().size()); }
  int cond_dim() const { return conditional ? num_modes() : 0; }
  double mode_std() const;
  void validate() const;

  struct Draw {
    Vec x;
    int mode;
  };
  Draw sample(Rng& rng) const;
  Vec condition_for(int mode) const;
  double log_density(const Vec& x) const;
};

struct SamplePair {
  Vec x0;
  Vec x1;
  double t;
  Vec xt;
  Vec v_target;
  Vec c;
};

// x_t = (1 - t) x0 + t x1,  v = x1 - x0.
SamplePair make_pair(const Vec& x0, const Vec& x1, double t, Vec c = {});

SamplePair sample_pair(const ToyDataset& dataset, Rng& rng);

struct LossAndGrads {
  double loss;
  NetGrads grads;
};

// Mean over the batch of ||v_target - v(x_t, t, c)||^2 (summed over dims).
LossAndGrads fm_loss_and_grads(const NetParams& params, std::span<const SamplePair> batch);

struct PretrainConfig {
  int steps = 5000;
  int batch_size = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::uint64_t init_seed = 0;
};

struct PretrainResult {
  NetParams params;
  std::vector<double> losses;  // one per step
};

PretrainResult pretrain(const ToyDataset& dataset, const NetArch& arch, const PretrainConfig& config,
                        const std::function<void(int, double)>& on_step = {});

}  // namespace flowguard
