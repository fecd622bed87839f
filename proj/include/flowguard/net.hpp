#pragma once

// Dense tanh network used as the velocity model v(x, t, c), with a
// hand-written reverse pass, Adam, and a binary checkpoint format.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace flowguard {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Number of time features appended to x: (t, sin 2πt, cos 2πt).
inline constexpr int kTimeFeatures = 3;

struct NetArch {
  int data_dim = 2;
  int cond_dim = 0;
  std::vector<int> hidden = {64, 64};

  int input_dim() const { return data_dim + kTimeFeatures + cond_dim; }
  int output_dim() const { return data_dim; }
  int num_layers() const { return static_cast<int>(hidden.size()) + 1; }
  // Rows/cols of layer l's weight matrix.
  int layer_in(int l) const;
  int layer_out(int l) const;
  void validate() const;

  bool operator==(const NetArch&) const = default;
};

struct DenseLayer {
  Mat weight;  // out x in
  Vec bias;    // out
};

// Per-layer storage shared by parameters and gradients.
struct LayerStack {
  std::vector<DenseLayer> layers;

  std::size_t num_scalars() const;
  // Flat view in declared order: layer 0 weight (column-major), layer 0
  // bias, layer 1 weight, ...
  std::vector<double> flatten() const;
  void assign_flat(const std::vector<double>& flat);
  double& scalar(std::size_t index);
  double scalar(std::size_t index) const;
  bool all_finite() const;
  bool same_shape(const LayerStack& other) const;
};

struct NetParams : LayerStack {
  NetArch arch;

  static NetParams zeros(const NetArch& arch);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
  static NetParams init(const NetArch& arch, std::uint64_t seed);
  void validate() const;
};

struct NetGrads : LayerStack {
  static NetGrads zeros_like(const NetParams& params);
  static NetGrads zeros_like(const NetGrads& grads);

  NetGrads& operator+=(const NetGrads& other);
  NetGrads& operator*=(double scale);
  double squared_norm() const;
};

struct NetInput {
  Vec x;
  double t = 0.5;
  Vec c;  // empty when unconditional
};

// Concatenated raw input [x, t, sin 2πt, cos 2πt, c].
Vec embed_input(const NetArch& arch, const NetInput& input);

Vec forward(const NetParams& params, const NetInput& input);

// dL/dθ for the scalar L with dL/d(output) = upstream.
NetGrads backward(const NetParams& params, const NetInput& input, const Vec& upstream);

// Adds dL/dθ into `grads` instead of allocating; used in hot loops.
void accumulate_backward(const NetParams& params, const NetInput& input, const Vec& upstream,
                         NetGrads& grads);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  NetGrads m;
  NetGrads v;

  static AdamState for_params(const NetParams& params);
};

// One bias-corrected Adam step; throws DivergenceError (and leaves both
// params and state untouched) if any gradient entry is non-finite.
void adam_step(NetParams& params, const NetGrads& grads, AdamState& state, double lr);

// Checkpoint format, little-endian:
//   char[4] "FGNT", u32 version, u32 data_dim, u32 cond_dim, u32 n_hidden,
//   u32 hidden[n_hidden], u64 n_scalars, f64 flat[n_scalars]
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const NetParams& params, const std::filesystem::path& path);
NetParams load_checkpoint(const std::filesystem::path& path);

}  // namespace flowguard
