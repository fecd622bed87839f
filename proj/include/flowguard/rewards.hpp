#pragma once

// Synthetic proxy reward and gold score. The proxy pulls samples toward an
// off-manifold attractor; the gold score measures fidelity to the true
// mixture, so maximizing the proxy alone degrades the gold score.

#include "flowguard/flow_pretrain.hpp"
#include "flowguard/net.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace flowguard {

struct ProxyReward {
  Vec attractor;
  double sharpness = 1.0;  // tau

  // Attractor at `scale` times the ring radius on the bisector between modes
  // 0 and 1.
  static ProxyReward between_modes(const ToyDataset& dataset, double scale = 1.3, double sharpness = 1.0);
  // Throws unless the attractor is > 2 mode std from every center.
  void validate(const ToyDataset& dataset) const;
};

// exp(-|x0 - p|^2 / tau), in (0, 1].
double proxy_reward(const Vec& x0, const ProxyReward& proxy);

struct GoldScore {
  ToyDataset reference;
  double coverage_radius = 0.0;
  int eval_count = 1024;
  // Reference values on true draws from `reference`.
  double ref_log_density = 0.0;
  double ref_mode_coverage = 1.0;

  // References computed from `eval_count` true samples drawn with `seed`.
  static GoldScore make(const ToyDataset& dataset, double coverage_radius, int eval_count, std::uint64_t seed);
};

struct GoldResult {
  double log_density;    // mean log p_data over the samples
  double mode_coverage;  // fraction of modes with a sample within the radius
  double composite;      // mean of the two, each normalized to the reference
};

// composite = (exp(log_density - ref_log_density) + mode_coverage / ref_mode_coverage) / 2
GoldResult gold_score(std::span<const Vec> samples, const GoldScore& gold);

}  // namespace flowguard
