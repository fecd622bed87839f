#include "flowguard/rewards.hpp"

#include "flowguard/errors.hpp"

#include <cmath>
#include <numbers>

namespace flowguard {

ProxyReward ProxyReward::between_modes(const ToyDataset& dataset, double scale, double sharpness) {
  dataset.validate();
  const Vec& a = dataset.centers[0];
  const Vec& b = dataset.centers[1];
  const double radius = a.norm();
  Vec bisector = a + b;
  if (bisector.norm() == 0.0) throw ConfigError("proxy: modes 0 and 1 are antipodal");
  ProxyReward proxy{bisector.normalized() * (scale * radius), sharpness};
  proxy.validate(dataset);
  return proxy;
}

void ProxyReward::validate(const ToyDataset& dataset) const {
  if (!(sharpness > 0.0)) throw ConfigError("proxy: sharpness must be > 0");
  if (attractor.size() != dataset.dim()) throw ConfigError("proxy: attractor dimension mismatch");
  const double min_gap = 2.0 * dataset.mode_std();
  for (const auto& c : dataset.centers) {
    if ((attractor - c).norm() <= min_gap) {
      throw ConfigError("proxy: attractor must lie more than 2 mode std from every mode center");
    }
  }
}

double proxy_reward(const Vec& x0, const ProxyReward& proxy) {
  return std::exp(-(x0 - proxy.attractor).squaredNorm() / proxy.sharpness);
}

namespace {

struct RawGold {
  double log_density;
  double coverage;
};

RawGold raw_gold(std::span<const Vec> samples, const ToyDataset& ds, double radius) {
  double ld = 0.0;
  std::vector<bool> hit(ds.centers.size(), false);
  for (const auto& x : samples) {
    ld += ds.log_density(x);
    for (std::size_t k = 0; k < ds.centers.size(); ++k) {
      if (!hit[k] && (x - ds.centers[k]).norm() <= radius) hit[k] = true;
    }
  }
  int covered = 0;
  for (bool h : hit) covered += h ? 1 : 0;
  return {ld / static_cast<double>(samples.size()),
          static_cast<double>(covered) / static_cast<double>(ds.centers.size())};
}

}  // namespace

GoldScore GoldScore::make(const ToyDataset& dataset, double coverage_radius, int eval_count, std::uint64_t seed) {
  dataset.validate();
  if (!(coverage_radius > 0.0)) throw ConfigError("gold: coverage radius must be > 0");
  if (eval_count < 2) throw ConfigError("gold: eval_count must be >= 2");
  GoldScore gold{dataset, coverage_radius, eval_count, 0.0, 1.0};
  Rng rng = make_stream({seed, 0x901dull});
  std::vector<Vec> draws;
  draws.reserve(eval_count);
  for (int i = 0; i < eval_count; ++i) draws.push_back(dataset.sample(rng).x);
  const auto raw = raw_gold(draws, dataset, coverage_radius);
  gold.ref_log_density = raw.log_density;
  gold.ref_mode_coverage = raw.coverage;
  return gold;
}

GoldResult gold_score(std::span<const Vec> samples, const GoldScore& gold) {
  if (samples.size() < 2) throw DataError("gold_score: need at least 2 samples");
  const auto raw = raw_gold(samples, gold.reference, gold.coverage_radius);
  const double density_term = std::exp(raw.log_density - gold.ref_log_density);
  const double coverage_term = raw.coverage / gold.ref_mode_coverage;
  return {raw.log_density, raw.coverage, 0.5 * (density_term + coverage_term)};
}

}  // namespace flowguard
