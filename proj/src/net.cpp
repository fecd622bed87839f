#include "flowguard/net.hpp"

#include "flowguard/errors.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

namespace flowguard {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

int NetArch::layer_in(int l) const { return l == 0 ? input_dim() : hidden[l - 1]; }

int NetArch::layer_out(int l) const {
  return l == num_layers() - 1 ? output_dim() : hidden[l];
}

void NetArch::validate() const {
  if (data_dim <= 0) throw ConfigError("net: data_dim must be positive");
  if (cond_dim < 0) throw ConfigError("net: cond_dim must be nonnegative");
  for (int h : hidden) {
    if (h <= 0) throw ConfigError("net: hidden widths must be positive");
  }
}

std::size_t LayerStack::num_scalars() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
  return n;
}

std::vector<double> LayerStack::flatten() const {
  std::vector<double> flat;
  flat.reserve(num_scalars());
  for (const auto& layer : layers) {
    flat.insert(flat.end(), layer.weight.data(), layer.weight.data() + layer.weight.size());
    flat.insert(flat.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
  }
  return flat;
}

void LayerStack::assign_flat(const std::vector<double>& flat) {
  if (flat.size() != num_scalars()) throw ConfigError("flat parameter array has wrong length");
  std::size_t offset = 0;
  for (auto& layer : layers) {
    std::memcpy(layer.weight.data(), flat.data() + offset, layer.weight.size() * sizeof(double));
    offset += layer.weight.size();
    std::memcpy(layer.bias.data(), flat.data() + offset, layer.bias.size() * sizeof(double));
    offset += layer.bias.size();
  }
}

double& LayerStack::scalar(std::size_t index) {
  for (auto& layer : layers) {
    const auto nw = static_cast<std::size_t>(layer.weight.size());
    if (index < nw) return layer.weight.data()[index];
    index -= nw;
    const auto nb = static_cast<std::size_t>(layer.bias.size());
    if (index < nb) return layer.bias.data()[index];
    index -= nb;
  }
  throw ConfigError("parameter index out of range");
}

double LayerStack::scalar(std::size_t index) const {
  return const_cast<LayerStack*>(this)->scalar(index);
}

bool LayerStack::all_finite() const {
  for (const auto& layer : layers) {
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  }
  return true;
}

bool LayerStack::same_shape(const LayerStack& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].weight.rows() != other.layers[l].weight.rows() ||
        layers[l].weight.cols() != other.layers[l].weight.cols() ||
        layers[l].bias.size() != other.layers[l].bias.size()) {
      return false;
    }
  }
  return true;
}

NetParams NetParams::zeros(const NetArch& arch) {
  arch.validate();
  NetParams p;
  p.arch = arch;
  for (int l = 0; l < arch.num_layers(); ++l) {
    p.layers.push_back({Mat::Zero(arch.layer_out(l), arch.layer_in(l)), Vec::Zero(arch.layer_out(l))});
  }
  return p;
}

NetParams NetParams::init(const NetArch& arch, std::uint64_t seed) {
  NetParams p = zeros(arch);
  std::mt19937_64 rng(seed);
  for (auto& layer : p.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = uniform(rng);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = uniform(rng);
  }
  return p;
}

void NetParams::validate() const {
  arch.validate();
  if (static_cast<int>(layers.size()) != arch.num_layers()) {
    throw ConfigError("net: layer count does not match architecture");
  }
  for (int l = 0; l < arch.num_layers(); ++l) {
    const auto& layer = layers[l];
    if (layer.weight.rows() != arch.layer_out(l) || layer.weight.cols() != arch.layer_in(l) ||
        layer.bias.size() != arch.layer_out(l)) {
      throw ConfigError("net: layer " + std::to_string(l) + " shape does not chain");
    }
  }
  if (!all_finite()) throw DivergenceError("net: non-finite parameter");
}

NetGrads NetGrads::zeros_like(const NetParams& params) {
  NetGrads g;
  g.layers.reserve(params.layers.size());
  for (const auto& layer : params.layers) {
    g.layers.push_back({Mat::Zero(layer.weight.rows(), layer.weight.cols()), Vec::Zero(layer.bias.size())});
  }
  return g;
}

NetGrads NetGrads::zeros_like(const NetGrads& grads) {
  NetGrads g;
  g.layers.reserve(grads.layers.size());
  for (const auto& layer : grads.layers) {
    g.layers.push_back({Mat::Zero(layer.weight.rows(), layer.weight.cols()), Vec::Zero(layer.bias.size())});
  }
  return g;
}

NetGrads& NetGrads::operator+=(const NetGrads& other) {
  if (!same_shape(other)) throw ConfigError("gradient shapes differ");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weight += other.layers[l].weight;
    layers[l].bias += other.layers[l].bias;
  }
  return *this;
}

NetGrads& NetGrads::operator*=(double scale) {
  for (auto& layer : layers) {
    layer.weight *= scale;
    layer.bias *= scale;
  }
  return *this;
}

double NetGrads::squared_norm() const {
  double s = 0.0;
  for (const auto& layer : layers) s += layer.weight.squaredNorm() + layer.bias.squaredNorm();
  return s;
}

Vec embed_input(const NetArch& arch, const NetInput& input) {
  if (input.x.size() != arch.data_dim) {
    throw ConfigError("net input: x has dimension " + std::to_string(input.x.size()) +
                      ", expected " + std::to_string(arch.data_dim));
  }
  if (input.c.size() != arch.cond_dim) {
    throw ConfigError("net input: condition has dimension " + std::to_string(input.c.size()) +
                      ", expected " + std::to_string(arch.cond_dim));
  }
  if (!std::isfinite(input.t)) throw ConfigError("net input: t is not finite");
  Vec z(arch.input_dim());
  const double phase = 2.0 * std::numbers::pi * input.t;
  z.head(arch.data_dim) = input.x;
  z[arch.data_dim] = input.t;
  z[arch.data_dim + 1] = std::sin(phase);
  z[arch.data_dim + 2] = std::cos(phase);
  z.tail(arch.cond_dim) = input.c;
  return z;
}

namespace {

// Post-activation of every hidden layer, plus the embedded input at [0].
std::vector<Vec> forward_trace(const NetParams& params, const NetInput& input) {
  std::vector<Vec> acts;
  acts.reserve(params.layers.size());
  acts.push_back(embed_input(params.arch, input));
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t l = 0; l < last; ++l) {
    Vec pre = params.layers[l].weight * acts.back() + params.layers[l].bias;
    acts.push_back(pre.array().tanh().matrix());
  }
  return acts;
}

}  // namespace

Vec forward(const NetParams& params, const NetInput& input) {
  const auto acts = forward_trace(params, input);
  const auto& out = params.layers.back();
  return out.weight * acts.back() + out.bias;
}

void accumulate_backward(const NetParams& params, const NetInput& input, const Vec& upstream,
                         NetGrads& grads) {
  if (upstream.size() != params.arch.output_dim()) {
    throw ConfigError("backward: upstream has dimension " + std::to_string(upstream.size()) +
                      ", expected " + std::to_string(params.arch.output_dim()));
  }
  if (!grads.same_shape(params)) throw ConfigError("backward: gradient buffer shape mismatch");
  const auto acts = forward_trace(params, input);
  Vec delta = upstream;
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    grads.layers[l].weight.noalias() += delta * acts[l].transpose();
    grads.layers[l].bias += delta;
    if (l == 0) break;
    Vec back = params.layers[l].weight.transpose() * delta;
    // tanh' = 1 - tanh^2
    delta = back.array() * (1.0 - acts[l].array().square());
  }
}

NetGrads backward(const NetParams& params, const NetInput& input, const Vec& upstream) {
  NetGrads grads = NetGrads::zeros_like(params);
  accumulate_backward(params, input, upstream, grads);
  return grads;
}

AdamState AdamState::for_params(const NetParams& params) {
  AdamState s;
  s.m = NetGrads::zeros_like(params);
  s.v = NetGrads::zeros_like(params);
  return s;
}

void adam_step(NetParams& params, const NetGrads& grads, AdamState& state, double lr) {
  if (!grads.same_shape(params)) throw ConfigError("adam: gradient shape mismatch");
  if (state.m.layers.empty()) state = AdamState::for_params(params);
  if (!state.m.same_shape(params)) throw ConfigError("adam: optimizer state shape mismatch");
  if (!grads.all_finite()) throw DivergenceError("adam: non-finite gradient, update rejected");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
      m = state.beta1 * m + (1.0 - state.beta1) * g;
      v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
      p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.eps);
    };
    update(params.layers[l].weight, grads.layers[l].weight, state.m.layers[l].weight,
           state.v.layers[l].weight);
    update(params.layers[l].bias, grads.layers[l].bias, state.m.layers[l].bias, state.v.layers[l].bias);
  }
}

namespace {

template <typename T>
void write_pod(std::ostream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::filesystem::path& path) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw DataError("checkpoint truncated: " + path.string());
  }
  return value;
}

constexpr char kMagic[4] = {'F', 'G', 'N', 'T'};

}  // namespace

void save_checkpoint(const NetParams& params, const std::filesystem::path& path) {
  params.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, 4);
  write_pod<std::uint32_t>(os, kCheckpointVersion);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(params.arch.data_dim));
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(params.arch.cond_dim));
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(params.arch.hidden.size()));
  for (int h : params.arch.hidden) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(h));
  const auto flat = params.flatten();
  write_pod<std::uint64_t>(os, flat.size());
  os.write(reinterpret_cast<const char*>(flat.data()), static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!os) throw DataError("failed writing checkpoint: " + path.string());
}

NetParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("not a flowguard checkpoint: " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
  }
  NetArch arch;
  arch.data_dim = static_cast<int>(read_pod<std::uint32_t>(is, path));
  arch.cond_dim = static_cast<int>(read_pod<std::uint32_t>(is, path));
  const auto n_hidden = read_pod<std::uint32_t>(is, path);
  if (n_hidden > 64) throw DataError("checkpoint header corrupt: " + path.string());
  arch.hidden.resize(n_hidden);
  for (auto& h : arch.hidden) h = static_cast<int>(read_pod<std::uint32_t>(is, path));
  NetParams params = NetParams::zeros(arch);
  const auto n = read_pod<std::uint64_t>(is, path);
  if (n != params.num_scalars()) throw DataError("checkpoint size does not match header: " + path.string());
  std::vector<double> flat(n);
  if (!is.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
    throw DataError("checkpoint truncated: " + path.string());
  }
  params.assign_flat(flat);
  params.validate();
  return params;
}

}  // namespace flowguard
