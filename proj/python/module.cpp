#include "flowguard/config.hpp"
#include "flowguard/errors.hpp"
#include "flowguard/grpo.hpp"
#include "flowguard/ratio.hpp"
#include "flowguard/rewards.hpp"
#include "flowguard/run.hpp"
#include "flowguard/sde.hpp"
#include "oracle/checks.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace flowguard;

namespace {

StepGeometry geometry(const std::string& schedule, double eta, double t, double dt, double sigma) {
  return {parse_schedule_variant(schedule), eta, t, dt, sigma};
}

RatioVariant ratio_variant(const std::string& name, std::optional<double> clip_range) {
  const VariantKind kind = parse_variant(name);
  return {kind, clip_range.value_or(default_clip_range(kind))};
}

py::dict curve_dict(const CurvePoint& p) {
  py::dict d;
  d["iteration"] = p.iteration;
  d["proxy_mean"] = p.proxy_mean;
  d["gold_composite"] = p.gold_composite;
  d["gold_log_density"] = p.gold_log_density;
  d["gold_mode_coverage"] = p.gold_mode_coverage;
  return d;
}

py::dict frame_dict(const DiagnosticsFrame& frame) {
  py::list steps;
  for (const auto& s : frame.steps) {
    py::dict d;
    d["k"] = s.k;
    d["t"] = s.t;
    d["count"] = s.count;
    d["mean_log_r"] = s.mean_log_r;
    d["var_log_r"] = s.var_log_r;
    d["se_mean_log_r"] = s.se_mean_log_r;
    d["clip_hi_frac"] = s.clip_hi_frac;
    d["clip_lo_frac"] = s.clip_lo_frac;
    d["grad_norm_mean"] = s.grad_norm_mean;
    steps.append(d);
  }
  py::list curves;
  for (const auto& p : frame.curves) curves.append(curve_dict(p));
  py::dict out;
  out["steps"] = steps;
  out["grad_norm_spread"] = frame.grad_norm_spread;
  out["curves"] = curves;
  return out;
}

std::vector<Vec> rows_of(const Mat& samples) {
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(samples.rows()));
  for (Eigen::Index i = 0; i < samples.rows(); ++i) out.emplace_back(samples.row(i).transpose());
  return out;
}

}  // namespace

PYBIND11_MODULE(_flowguard, m) {
  m.doc() = "GRPO for flow-matching models: ratio engine, trainer and diagnostics";

  auto base = py::register_exception<Error>(m, "FlowguardError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());

  // ---- schedule and sampler ----------------------------------------------

  py::class_<GridPoint>(m, "GridPoint")
      .def_readonly("t", &GridPoint::t)
      .def_readonly("dt", &GridPoint::dt)
      .def_readonly("sigma", &GridPoint::sigma)
      .def("__repr__", [](const GridPoint& g) {
        return "GridPoint(t=" + std::to_string(g.t) + ", dt=" + std::to_string(g.dt) +
               ", sigma=" + std::to_string(g.sigma) + ")";
      });

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def_property_readonly("variant", [](const NoiseSchedule& s) { return std::string(to_string(s.variant)); })
      .def_readonly("eta", &NoiseSchedule::eta)
      .def_readonly("steps", &NoiseSchedule::steps)
      .def_readonly("t_eps", &NoiseSchedule::t_eps)
      .def_readonly("grid", &NoiseSchedule::grid)
      .def("sigma", &NoiseSchedule::sigma, py::arg("t"));

  m.def("build_schedule", py::overload_cast<std::string_view, double, int, double>(&build_schedule),
        py::arg("variant") = "flow_grpo", py::arg("eta") = 0.7, py::arg("steps") = 8, py::arg("t_eps") = 1e-3,
        "Decreasing time grid with clamped t, uniform dt and sigma at each point.");
  m.def(
      "schedule_sigma",
      [](const std::string& variant, double eta, double t) {
        return schedule_sigma(parse_schedule_variant(variant), eta, t);
      },
      py::arg("variant"), py::arg("eta"), py::arg("t"));
  m.def("drift_mean", &drift_mean, py::arg("v"), py::arg("x"), py::arg("t"), py::arg("dt"), py::arg("sigma"),
        "x - [v + sigma^2/(2t) (x + (1-t) v)] dt");
  m.def("drift_v_coefficient", &drift_v_coefficient, py::arg("t"), py::arg("sigma"));

  // ---- ratio engine -------------------------------------------------------

  m.def("variant_names", [] {
    std::vector<std::string> out;
    for (auto v : kAllVariants) out.emplace_back(to_string(v));
    return out;
  });
  m.def("default_clip_range", [](const std::string& name) { return default_clip_range(parse_variant(name)); },
        py::arg("variant"));
  m.def("log_step_density", &log_step_density, py::arg("mu"), py::arg("sigma"), py::arg("dt"), py::arg("x_next"));
  m.def("log_ratio_closed_form", &log_ratio_closed_form, py::arg("delta_mu"), py::arg("eps"), py::arg("sigma"),
        py::arg("dt"));
  m.def(
      "log_ratio_stats",
      [](const Vec& delta_mu, double sigma, double dt) {
        const auto s = log_ratio_stats(delta_mu, sigma, dt);
        return py::make_tuple(s.mean, s.variance);
      },
      py::arg("delta_mu"), py::arg("sigma"), py::arg("dt"), "Exact (mean, variance) of log r over eps.");
  m.def("rationorm", &rationorm, py::arg("delta_mu"), py::arg("eps"), py::arg("sigma") = 1.0, py::arg("dt") = 1.0);
  m.def(
      "beta_const",
      [](const std::string& schedule, double t, double eta) {
        return beta_const(parse_schedule_variant(schedule), t, eta);
      },
      py::arg("schedule"), py::arg("t"), py::arg("eta"));
  m.def(
      "delta_factor",
      [](const std::string& schedule, double t, double dt, double eta) {
        return delta_factor(parse_schedule_variant(schedule), t, dt, eta);
      },
      py::arg("schedule"), py::arg("t"), py::arg("dt"), py::arg("eta"));
  m.def(
      "variant_log_ratio",
      [](const std::string& variant, const Vec& delta_mu, const Vec& eps, double sigma, double dt, double t,
         double eta, const std::string& schedule) {
        const auto r = variant_log_ratio(ratio_variant(variant, std::nullopt), geometry(schedule, eta, t, dt, sigma),
                                         delta_mu, eps);
        return py::make_tuple(r.log_ratio, r.reweight);
      },
      py::arg("variant"), py::arg("delta_mu"), py::arg("eps"), py::arg("sigma"), py::arg("dt"), py::arg("t") = 0.5,
      py::arg("eta") = 0.7, py::arg("schedule") = "flow_grpo",
      "(log ratio that is clipped, reweight of the step term) for a variant.");
  m.def(
      "variant_grad_scale",
      [](const std::string& variant, const Vec& delta_mu, const Vec& eps, double sigma, double dt, double t,
         double eta, const std::string& schedule) {
        return variant_grad_scale(ratio_variant(variant, std::nullopt), geometry(schedule, eta, t, dt, sigma),
                                  delta_mu, eps);
      },
      py::arg("variant"), py::arg("delta_mu"), py::arg("eps"), py::arg("sigma"), py::arg("dt"), py::arg("t") = 0.5,
      py::arg("eta") = 0.7, py::arg("schedule") = "flow_grpo");

  // ---- GRPO core ----------------------------------------------------------

  m.def(
      "group_advantages",
      [](const std::vector<double>& rewards, double std_floor) { return group_advantages(rewards, std_floor); },
      py::arg("rewards"), py::arg("std_floor") = 1e-6);
  m.def(
      "surrogate_term",
      [](double r, double advantage, double clip_range) {
        const auto s = surrogate_term(r, advantage, clip_range);
        return py::make_tuple(s.value, s.branch == SurrogateBranch::unclipped ? "unclipped" : "clipped",
                              s.gate == GradGate::open ? "open" : "closed");
      },
      py::arg("r"), py::arg("advantage"), py::arg("clip_range"), "(value, branch, gate)");

  // ---- rewards ------------------------------------------------------------

  m.def(
      "proxy_reward",
      [](const Vec& x, const Vec& attractor, double sharpness) {
        return proxy_reward(x, ProxyReward{attractor, sharpness});
      },
      py::arg("x"), py::arg("attractor"), py::arg("sharpness") = 1.0);

  // ---- configuration and runs ---------------------------------------------

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("from_json", &parse_config, py::arg("text"))
      .def_static("load", &load_config, py::arg("path"))
      .def("to_json", &dump_config)
      .def("validate", &RunConfig::validate)
      .def_readwrite("run_root", &RunConfig::run_root)
      .def_readwrite("threads", &RunConfig::threads);

  py::class_<Environment>(m, "Environment")
      .def(py::init(&make_environment), py::arg("config"))
      .def_property_readonly("attractor", [](const Environment& e) { return e.proxy.attractor; })
      .def_property_readonly("centers", [](const Environment& e) { return e.dataset.centers; })
      .def_property_readonly("reference_log_density", [](const Environment& e) { return e.gold.ref_log_density; })
      .def("proxy", [](const Environment& e, const Vec& x) { return proxy_reward(x, e.proxy); }, py::arg("x"))
      .def(
          "gold",
          [](const Environment& e, const Mat& samples) {
            const auto g = gold_score(rows_of(samples), e.gold);
            py::dict d;
            d["log_density"] = g.log_density;
            d["mode_coverage"] = g.mode_coverage;
            d["composite"] = g.composite;
            return d;
          },
          py::arg("samples"), "Gold score of an (n, d) array of samples.");

  m.def(
      "pretrain",
      [](const RunConfig& config, std::optional<std::filesystem::path> checkpoint,
         std::optional<std::filesystem::path> metrics_csv) {
        py::gil_scoped_release release;
        const auto path = checkpoint ? *checkpoint : pretrained_checkpoint_path(config);
        const auto out = run_pretrain(config, path, metrics_csv.value_or(std::filesystem::path()));
        return out.losses;
      },
      py::arg("config"), py::arg("checkpoint") = py::none(), py::arg("metrics_csv") = py::none(),
      "Train the base velocity model; writes the checkpoint and returns per-step losses.");
  m.def(
      "rl_train",
      [](const RunConfig& config, const std::filesystem::path& run_dir,
         std::optional<std::filesystem::path> resume) {
        RLRunOutcome out;
        {
          py::gil_scoped_release release;
          RLRunOptions opts;
          opts.run_dir = run_dir;
          opts.resume = std::move(resume);
          out = run_rl_train(config, opts);
        }
        py::list curves;
        for (const auto& p : out.curves) curves.append(curve_dict(p));
        py::dict d;
        d["run_dir"] = out.run_dir;
        d["clip_range"] = out.clip_range;
        d["curves"] = curves;
        d["summary"] = out.summary ? py::object(frame_dict(*out.summary)) : py::object(py::none());
        return d;
      },
      py::arg("config"), py::arg("run_dir"), py::arg("resume") = py::none(),
      "GRPO fine-tuning against the proxy; writes the run directory artifacts.");
  m.def(
      "diagnose",
      [](const std::filesystem::path& run_dir) {
        const auto frame = run_diagnose(run_dir);
        py::dict d = frame_dict(frame);
        d["table"] = format_diagnostics_table(frame);
        return d;
      },
      py::arg("run_dir"));
  m.def(
      "oracle_check",
      [](std::uint64_t seed) {
        oracle::CheckReport report;
        {
          py::gil_scoped_release release;
          report = oracle::run_oracle_checks(seed);
        }
        return py::make_tuple(report.all_passed(), report.text());
      },
      py::arg("seed") = 20251028, "(all passed, report text)");

  m.attr("METRICS_HEADER") = kMetricsHeader;
  m.attr("CURVES_HEADER") = kCurvesHeader;
  m.attr("HISTOGRAMS_HEADER") = kHistogramsHeader;
}
