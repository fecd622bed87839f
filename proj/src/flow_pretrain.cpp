#include "flowguard/flow_pretrain.hpp"

#include "flowguard/errors.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace flowguard {

ToyDataset ToyDataset::ring(int modes, double radius, double cov_scale, int dim) {
  if (dim < 2) throw ConfigError("dataset: ring layout needs dim >= 2");
  ToyDataset ds;
  ds.cov_scale = cov_scale;
  for (int k = 0; k < modes; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / modes;
    Vec c = Vec::Zero(dim);
    c[0] = radius * std::cos(angle);
    c[1] = radius * std::sin(angle);
    ds.centers.push_back(c);
  }
  ds.weights.assign(modes, 1.0 / modes);
  return ds;
}

double ToyDataset::mode_std() const { return std::sqrt(cov_scale); }

void ToyDataset::validate() const {
  if (centers.size() < 2) throw ConfigError("dataset: need at least 2 modes");
  if (weights.size() != centers.size()) throw ConfigError("dataset: weights/centers length mismatch");
  if (!(cov_scale > 0.0)) throw ConfigError("dataset: cov_scale must be > 0");
  const int d = dim();
  for (const auto& c : centers) {
    if (c.size() != d || d <= 0) throw ConfigError("dataset: inconsistent center dimensions");
    if (!c.allFinite()) throw ConfigError("dataset: non-finite center");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ConfigError("dataset: negative mixture weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("dataset: mixture weights must sum to 1");
}

ToyDataset::Draw ToyDataset::sample(Rng& rng) const {
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  const int mode = pick(rng);
  Vec x = centers[mode] + mode_std() * standard_normal(rng, dim());
  return {std::move(x), mode};
}

Vec ToyDataset::condition_for(int mode) const {
  if (!conditional) return {};
  Vec c = Vec::Zero(num_modes());
  c[mode] = 1.0;
  return c;
}

double ToyDataset::log_density(const Vec& x) const {
  // log-sum-exp over modes
  const int d = dim();
  const double log_norm = -0.5 * d * std::log(2.0 * std::numbers::pi * cov_scale);
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(centers.size());
  for (std::size_t k = 0; k < centers.size(); ++k) {
    terms[k] = std::log(weights[k]) + log_norm - (x - centers[k]).squaredNorm() / (2.0 * cov_scale);
    best = std::max(best, terms[k]);
  }
  if (!std::isfinite(best)) return best;
  double acc = 0.0;
  for (double term : terms) acc += std::exp(term - best);
  return best + std::log(acc);
}

SamplePair make_pair(const Vec& x0, const Vec& x1, double t, Vec c) {
  SamplePair p{x0, x1, t, (1.0 - t) * x0 + t * x1, x1 - x0, std::move(c)};
  return p;
}

SamplePair sample_pair(const ToyDataset& dataset, Rng& rng) {
  auto draw = dataset.sample(rng);
  Vec x1 = standard_normal(rng, dataset.dim());
  // open interval (0, 1)
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  double t = uniform(rng);
  while (t <= 0.0) t = uniform(rng);
  return make_pair(draw.x, x1, t, dataset.condition_for(draw.mode));
}

LossAndGrads fm_loss_and_grads(const NetParams& params, std::span<const SamplePair> batch) {
  if (batch.empty()) throw ConfigError("fm_loss: empty batch");
  LossAndGrads out{0.0, NetGrads::zeros_like(params)};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    const NetInput in{s.xt, s.t, s.c};
    const Vec residual = forward(params, in) - s.v_target;
    out.loss += residual.squaredNorm() * inv_n;
    accumulate_backward(params, in, 2.0 * inv_n * residual, out.grads);
  }
  if (!std::isfinite(out.loss)) throw DivergenceError("fm_loss: non-finite loss");
  return out;
}

PretrainResult pretrain(const ToyDataset& dataset, const NetArch& arch, const PretrainConfig& config,
                        const std::function<void(int, double)>& on_step) {
  dataset.validate();
  if (arch.data_dim != dataset.dim() || arch.cond_dim != dataset.cond_dim()) {
    throw ConfigError("pretrain: network architecture does not match dataset dimensions");
  }
  if (config.steps < 0) throw ConfigError("pretrain: steps must be >= 0");
  if (config.batch_size <= 0) throw ConfigError("pretrain: batch_size must be > 0");
  if (!(config.lr > 0.0)) throw ConfigError("pretrain: lr must be > 0");

  PretrainResult result{NetParams::init(arch, config.init_seed), {}};
  result.losses.reserve(config.steps);
  AdamState adam = AdamState::for_params(result.params);
  std::vector<SamplePair> batch(config.batch_size);
  for (int step = 0; step < config.steps; ++step) {
    Rng rng = make_stream({config.seed, 0x9e7a11ull, static_cast<std::uint64_t>(step)});
    for (auto& s : batch) s = sample_pair(dataset, rng);
    auto [loss, grads] = fm_loss_and_grads(result.params, batch);
    adam_step(result.params, grads, adam, config.lr);
    result.losses.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  return result;
}

}  // namespace flowguard
