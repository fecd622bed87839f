#include "flowguard/config.hpp"

#include "flowguard/errors.hpp"

#include "json.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace flowguard {

using nlohmann::json;

ToyDataset DatasetConfig::build() const {
  ToyDataset ds = ToyDataset::ring(modes, radius, cov_scale, dim);
  ds.conditional = conditional;
  ds.validate();
  return ds;
}

namespace {

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& root, std::string name) : name_(std::move(name)) {
    if (root.contains(name_)) {
      node_ = &root.at(name_);
      if (!node_->is_object()) throw ConfigError(name_ + ": expected an object");
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (node_ == nullptr || !node_->contains(key)) return;
    const json& v = node_->at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError(field(key) + ": wrong type (" + v.dump() + ")");
    }
  }

  template <typename T>
  void read_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (node_ == nullptr || !node_->contains(key) || node_->at(key).is_null()) return;
    T value{};
    read(key, value);
    out = value;
  }

  template <typename T>
  void read_map(const char* key, std::map<std::string, T>& out) {
    seen_.insert(key);
    if (node_ == nullptr || !node_->contains(key)) return;
    const json& v = node_->at(key);
    if (!v.is_object()) throw ConfigError(field(key) + ": expected an object");
    for (const auto& [k, item] : v.items()) {
      if (!item.is_number()) throw ConfigError(field(key) + "." + k + ": expected a number");
      out[k] = item.template get<T>();
    }
  }

  void finish() const {
    if (node_ == nullptr) return;
    for (const auto& [k, v] : node_->items()) {
      if (!seen_.contains(k)) throw ConfigError(field(k.c_str()) + ": unknown key");
    }
  }

  std::string field(const char* key) const { return name_ + "." + key; }

 private:
  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> seen_;
};

template <typename T>
void check(bool ok, const std::string& field, const T& detail) {
  if (!ok) throw ConfigError(field + ": " + detail);
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  static const std::set<std::string> kSections = {"dataset", "net",     "pretrain",    "schedule",
                                                  "rl",      "rewards", "diagnostics", "run"};
  for (const auto& [k, v] : root.items()) {
    if (!kSections.contains(k)) throw ConfigError(k + ": unknown section");
  }

  RunConfig c;
  {
    Section s(root, "dataset");
    s.read("modes", c.dataset.modes);
    s.read("radius", c.dataset.radius);
    s.read("cov_scale", c.dataset.cov_scale);
    s.read("dim", c.dataset.dim);
    s.read("conditional", c.dataset.conditional);
    s.finish();
  }
  {
    Section s(root, "net");
    s.read("hidden", c.net.hidden);
    s.read("init_seed", c.init_seed);
    s.finish();
  }
  {
    Section s(root, "pretrain");
    s.read("steps", c.pretrain.steps);
    s.read("batch_size", c.pretrain.batch_size);
    s.read("lr", c.pretrain.lr);
    s.read("seed", c.pretrain.seed);
    s.read("checkpoint", c.pretrain_checkpoint);
    s.finish();
  }
  {
    Section s(root, "schedule");
    std::string variant(to_string(c.rl.rl.schedule));
    s.read("variant", variant);
    c.rl.rl.schedule = parse_schedule_variant(variant);
    s.read("eta", c.rl.rl.eta);
    s.read("steps", c.rl.rl.steps);
    s.read("t_eps", c.rl.rl.t_eps);
    s.finish();
  }
  {
    Section s(root, "rl");
    std::string variant(to_string(c.rl.rl.variant.kind));
    s.read("variant", variant);
    c.rl.rl.variant = RatioVariant::with_default_clip(parse_variant(variant));
    s.read_optional("clip_range", c.rl.clip_range);
    s.read("calibrate_clip", c.rl.calibrate_clip);
    s.read("group_size", c.rl.rl.group_size);
    s.read("groups_per_iter", c.rl.rl.groups_per_iter);
    s.read("inner_epochs", c.rl.rl.inner_epochs);
    s.read_map("epochs_by_variant", c.rl.epochs_by_variant);
    s.read("lr", c.rl.rl.lr);
    s.read_map("lr_by_variant", c.rl.lr_by_variant);
    s.read("iterations", c.rl.rl.iterations);
    s.read("seed", c.rl.rl.seed);
    s.read("std_floor", c.rl.rl.std_floor);
    s.read("init_checkpoint", c.rl.init_checkpoint);
    s.read("checkpoint_every", c.rl.checkpoint_every);
    s.finish();
  }
  {
    Section s(root, "rewards");
    s.read("attractor_scale", c.rewards.attractor_scale);
    s.read("sharpness", c.rewards.sharpness);
    s.read("coverage_radius", c.rewards.coverage_radius);
    s.read("gold_eval_count", c.rewards.gold_eval_count);
    s.read("gold_eval_every", c.rewards.gold_eval_every);
    s.read("gold_ode_steps", c.rewards.gold_ode_steps);
    s.read("gold_seed", c.rewards.gold_seed);
    s.finish();
  }
  {
    Section s(root, "diagnostics");
    s.read("histogram_bins", c.diagnostics.histogram_bins);
    s.read("histogram_every", c.diagnostics.histogram_every);
    s.read("dump_trajectories", c.diagnostics.dump_trajectories);
    s.finish();
  }
  {
    Section s(root, "run");
    s.read("root", c.run_root);
    s.read("threads", c.threads);
    s.finish();
  }
  c.net.data_dim = c.dataset.dim;
  c.net.cond_dim = c.dataset.conditional ? c.dataset.modes : 0;
  c.pretrain.init_seed = c.init_seed;
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file: " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

RLConfig RunConfig::resolved_rl() const {
  RLConfig out = rl.rl;
  const std::string name(to_string(out.variant.kind));
  if (auto it = rl.lr_by_variant.find(name); it != rl.lr_by_variant.end()) out.lr = it->second;
  if (auto it = rl.epochs_by_variant.find(name); it != rl.epochs_by_variant.end()) out.inner_epochs = it->second;
  out.variant.clip_range = rl.clip_range.value_or(default_clip_range(out.variant.kind));
  out.threads = threads;
  return out;
}

void RunConfig::validate() const {
  check(dataset.modes >= 2, "dataset.modes", "must be >= 2");
  check(dataset.radius > 0.0, "dataset.radius", "must be > 0");
  check(dataset.cov_scale > 0.0, "dataset.cov_scale", "must be > 0");
  check(dataset.dim >= 2, "dataset.dim", "must be >= 2");
  for (int h : net.hidden) check(h > 0, "net.hidden", "widths must be positive");
  check(pretrain.steps >= 0, "pretrain.steps", "must be >= 0");
  check(pretrain.batch_size > 0, "pretrain.batch_size", "must be > 0");
  check(pretrain.lr > 0.0, "pretrain.lr", "must be > 0");
  check(rl.rl.eta > 0.0, "schedule.eta", "must be > 0");
  check(rl.rl.steps >= 2, "schedule.steps", "must be >= 2");
  check(rl.rl.t_eps > 0.0 && rl.rl.t_eps < 0.1, "schedule.t_eps", "must lie in (0, 0.1)");
  if (rl.clip_range) check(*rl.clip_range > 0.0 && *rl.clip_range < 1.0, "rl.clip_range", "must lie in (0, 1)");
  check(rl.rl.group_size >= 2, "rl.group_size", "must be >= 2");
  check(rl.rl.groups_per_iter >= 1, "rl.groups_per_iter", "must be >= 1");
  check(rl.rl.inner_epochs >= 1, "rl.inner_epochs", "must be >= 1");
  check(rl.rl.lr > 0.0, "rl.lr", "must be > 0");
  for (const auto& [name, lr] : rl.lr_by_variant) {
    parse_variant(name);
    check(lr > 0.0, "rl.lr_by_variant." + name, "must be > 0");
  }
  for (const auto& [name, epochs] : rl.epochs_by_variant) {
    parse_variant(name);
    check(epochs >= 1, "rl.epochs_by_variant." + name, "must be >= 1");
  }
  check(rl.rl.iterations >= 0, "rl.iterations", "must be >= 0");
  check(rl.rl.std_floor > 0.0, "rl.std_floor", "must be > 0");
  check(rl.checkpoint_every >= 0, "rl.checkpoint_every", "must be >= 0");
  check(rewards.sharpness > 0.0, "rewards.sharpness", "must be > 0");
  check(rewards.gold_eval_count >= 2, "rewards.gold_eval_count", "must be >= 2");
  check(rewards.gold_eval_every >= 1, "rewards.gold_eval_every", "must be >= 1");
  check(rewards.gold_ode_steps >= 1, "rewards.gold_ode_steps", "must be >= 1");
  check(diagnostics.histogram_bins >= 1, "diagnostics.histogram_bins", "must be >= 1");
  check(diagnostics.histogram_every >= 1, "diagnostics.histogram_every", "must be >= 1");
  check(threads >= 0, "run.threads", "must be >= 0");
}

std::string dump_config(const RunConfig& c) {
  json j;
  j["dataset"] = {{"modes", c.dataset.modes},
                  {"radius", c.dataset.radius},
                  {"cov_scale", c.dataset.cov_scale},
                  {"dim", c.dataset.dim},
                  {"conditional", c.dataset.conditional}};
  j["net"] = {{"hidden", c.net.hidden}, {"init_seed", c.init_seed}};
  j["pretrain"] = {{"steps", c.pretrain.steps},
                   {"batch_size", c.pretrain.batch_size},
                   {"lr", c.pretrain.lr},
                   {"seed", c.pretrain.seed},
                   {"checkpoint", c.pretrain_checkpoint}};
  j["schedule"] = {{"variant", std::string(to_string(c.rl.rl.schedule))},
                   {"eta", c.rl.rl.eta},
                   {"steps", c.rl.rl.steps},
                   {"t_eps", c.rl.rl.t_eps}};
  json rl = {{"variant", std::string(to_string(c.rl.rl.variant.kind))},
             {"calibrate_clip", c.rl.calibrate_clip},
             {"group_size", c.rl.rl.group_size},
             {"groups_per_iter", c.rl.rl.groups_per_iter},
             {"inner_epochs", c.rl.rl.inner_epochs},
             {"epochs_by_variant", c.rl.epochs_by_variant},
             {"lr", c.rl.rl.lr},
             {"lr_by_variant", c.rl.lr_by_variant},
             {"iterations", c.rl.rl.iterations},
             {"seed", c.rl.rl.seed},
             {"std_floor", c.rl.rl.std_floor},
             {"init_checkpoint", c.rl.init_checkpoint},
             {"checkpoint_every", c.rl.checkpoint_every}};
  rl["clip_range"] = c.rl.clip_range ? json(*c.rl.clip_range) : json(nullptr);
  j["rl"] = rl;
  j["rewards"] = {{"attractor_scale", c.rewards.attractor_scale},
                  {"sharpness", c.rewards.sharpness},
                  {"coverage_radius", c.rewards.coverage_radius},
                  {"gold_eval_count", c.rewards.gold_eval_count},
                  {"gold_eval_every", c.rewards.gold_eval_every},
                  {"gold_ode_steps", c.rewards.gold_ode_steps},
                  {"gold_seed", c.rewards.gold_seed}};
  j["diagnostics"] = {{"histogram_bins", c.diagnostics.histogram_bins},
                      {"histogram_every", c.diagnostics.histogram_every},
                      {"dump_trajectories", c.diagnostics.dump_trajectories}};
  j["run"] = {{"root", c.run_root}, {"threads", c.threads}};
  return j.dump(2) + "\n";
}

std::filesystem::path run_root(const RunConfig& config) {
  if (const char* env = std::getenv("FLOWGUARD_RUN_ROOT"); env != nullptr && *env != '\0') return env;
  return config.run_root;
}

std::filesystem::path pretrained_checkpoint_path(const RunConfig& config) {
  if (!config.pretrain_checkpoint.empty()) return config.pretrain_checkpoint;
  return run_root(config) / "pretrained.bin";
}

std::filesystem::path init_checkpoint_path(const RunConfig& config) {
  if (!config.rl.init_checkpoint.empty()) return config.rl.init_checkpoint;
  return pretrained_checkpoint_path(config);
}

}  // namespace flowguard
