#include "spinsim/json_io.hpp"

#include <cmath>

#include "spinsim/errors.hpp"
#include "spinsim/units.hpp"

namespace spinsim::json_io {

namespace {

double require_number(const json& j, const std::string& key) {
  if (!j.contains(key)) throw ConfigError("missing key \"" + key + "\"");
  if (!j.at(key).is_number()) throw ConfigError("key \"" + key + "\" must be a number");
  return j.at(key).get<double>();
}

double number_or(const json& j, const std::string& key, double fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  if (!j.at(key).is_number()) throw ConfigError("key \"" + key + "\" must be a number");
  return j.at(key).get<double>();
}

std::vector<double> require_number_array(const json& j, const std::string& key) {
  if (!j.contains(key) || !j.at(key).is_array())
    throw ConfigError("missing array \"" + key + "\"");
  std::vector<double> out;
  out.reserve(j.at(key).size());
  for (const auto& v : j.at(key)) {
    if (!v.is_number()) throw ConfigError("array \"" + key + "\" must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::vector<bool> mask_from_json(const json& j, const std::string& key,
                                 const std::vector<bool>& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_boolean()) return {v.get<bool>()};
  if (v.is_array()) {
    std::vector<bool> out;
    for (const auto& e : v) {
      if (!e.is_boolean()) throw ConfigError("mask \"" + key + "\" must hold booleans");
      out.push_back(e.get<bool>());
    }
    return out;
  }
  throw ConfigError("mask \"" + key + "\" must be a boolean or boolean array");
}

ExtraneousNoiseSpec extraneous_from_json(const json& j) {
  ExtraneousNoiseSpec spec;
  spec.amplitude = require_number(j, "amplitude_sn");
  spec.width = hz_to_rad(require_number(j, "width_hz"));
  spec.center = hz_to_rad(require_number(j, "center_hz"));
  spec.validate();
  return spec;
}

json extraneous_to_json(const ExtraneousNoiseSpec& spec) {
  return {{"amplitude_sn", spec.amplitude},
          {"width_hz", rad_to_hz(spec.width)},
          {"center_hz", rad_to_hz(spec.center)}};
}

}  // namespace

json model_to_json(const EnsembleModel& model) {
  json modes = json::array();
  for (const auto& m : model.modes) {
    modes.push_back({{"omega_hz", rad_to_hz(m.omega)},
                     {"gamma0_hz", rad_to_hz(m.gamma0)},
                     {"gamma_meas_hz", rad_to_hz(m.gamma_meas)},
                     {"zeta", m.zeta},
                     {"n_th", m.n_th}});
  }
  json j = {{"modes", modes}, {"eta", model.eta}};
  j["extraneous"] = model.extraneous ? extraneous_to_json(*model.extraneous) : json();
  return j;
}

EnsembleModel model_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("model must be a JSON object");
  if (!j.contains("modes") || !j.at("modes").is_array())
    throw ConfigError("model must contain a \"modes\" array");
  EnsembleModel model;
  for (const auto& mj : j.at("modes")) {
    ModeParams m;
    m.omega = hz_to_rad(require_number(mj, "omega_hz"));
    m.gamma0 = hz_to_rad(require_number(mj, "gamma0_hz"));
    m.gamma_meas = hz_to_rad(require_number(mj, "gamma_meas_hz"));
    m.zeta = number_or(mj, "zeta", 0.0);
    m.n_th = number_or(mj, "n_th", 0.0);
    model.modes.push_back(m);
  }
  model.eta = number_or(j, "eta", 1.0);
  if (j.contains("extraneous") && !j.at("extraneous").is_null())
    model.extraneous = extraneous_from_json(j.at("extraneous"));
  model.validate();
  return model;
}

CesiumLevelSpec cesium_from_json(const json& j) {
  CesiumLevelSpec spec;
  spec.f_number = static_cast<int>(number_or(j, "f_number", 4.0));
  spec.populations = require_number_array(j, "populations");
  spec.larmor = hz_to_rad(require_number(j, "larmor_hz"));
  spec.split_qz = hz_to_rad(number_or(j, "split_qz_hz", 0.0));
  spec.split_ts = hz_to_rad(number_or(j, "split_ts_hz", 0.0));
  spec.rate_scale = hz_to_rad(require_number(j, "rate_scale_hz"));
  spec.zeta_common = number_or(j, "zeta_common", 0.0);
  spec.gamma0 = hz_to_rad(number_or(j, "gamma0_hz", 0.0));
  if (j.contains("omega_override_hz")) {
    const auto& o = j.at("omega_override_hz");
    if (!o.is_object()) throw ConfigError("omega_override_hz must map m to Hz");
    for (const auto& [key, value] : o.items())
      spec.omega_overrides[std::stoi(key)] = hz_to_rad(value.get<double>());
  }
  spec.validate();
  return spec;
}

EnsembleModel ensemble_config_to_model(const json& j) {
  if (!j.contains("cesium")) throw ConfigError("ensemble config must contain \"cesium\"");
  EnsembleModel model = build_cesium_ensemble(cesium_from_json(j.at("cesium")));
  model.eta = number_or(j, "eta", 1.0);
  if (j.contains("extraneous") && !j.at("extraneous").is_null())
    model.extraneous = extraneous_from_json(j.at("extraneous"));
  model.validate();
  return model;
}

std::vector<double> grid_from_json(const json& j) {
  std::vector<double> grid;
  if (j.is_array()) {
    for (const auto& v : j) grid.push_back(hz_to_rad(v.get<double>()));
    return grid;
  }
  if (j.is_object()) {
    const double start = require_number(j, "start_hz");
    const double stop = require_number(j, "stop_hz");
    const double points = require_number(j, "points");
    const auto n = static_cast<size_t>(points);
    if (n < 2 || points != std::floor(points))
      throw ConfigError("grid points must be an integer >= 2");
    grid.reserve(n);
    for (size_t k = 0; k < n; ++k) {
      const double f = start + (stop - start) * static_cast<double>(k) /
                                   static_cast<double>(n - 1);
      grid.push_back(hz_to_rad(f));
    }
    return grid;
  }
  throw ConfigError("grid must be an array of Hz or {start_hz, stop_hz, points}");
}

std::vector<double> angles_from_json(const json& j) {
  std::vector<double> angles;
  if (j.is_array()) {
    for (const auto& v : j) angles.push_back(v.get<double>());
    return angles;
  }
  if (j.is_object()) {
    const double count = require_number(j, "count");
    const auto n = static_cast<size_t>(count);
    if (n < 1 || count != std::floor(count))
      throw ConfigError("angle count must be an integer >= 1");
    const double pi = 3.14159265358979323846;
    for (size_t k = 0; k < n; ++k)
      angles.push_back(pi * static_cast<double>(k) / static_cast<double>(n));
    return angles;
  }
  throw ConfigError("angles must be an array of radians or {count}");
}

SpectrumMethod method_from_string(const std::string& name) {
  if (name == "full") return SpectrumMethod::full;
  if (name == "rwa") return SpectrumMethod::rwa;
  if (name == "analytic" || name == "analytic_single_mode")
    return SpectrumMethod::analytic_single_mode;
  throw ConfigError("unknown method \"" + name + "\" (expected full, rwa, or analytic)");
}

SynthConfig synth_config_from_json(const json& j) {
  SynthConfig cfg;
  if (!j.contains("model")) throw ConfigError("synth config must contain \"model\"");
  cfg.model = model_from_json(j.at("model"));
  if (!j.contains("grid")) throw ConfigError("synth config must contain \"grid\"");
  cfg.grid = grid_from_json(j.at("grid"));
  if (!j.contains("angles")) throw ConfigError("synth config must contain \"angles\"");
  cfg.angles = angles_from_json(j.at("angles"));
  cfg.n_avg = number_or(j, "n_avg", 1.0);
  return cfg;
}

json dataset_to_json(const std::vector<WeightedTrace>& dataset) {
  json traces = json::array();
  for (const auto& wt : dataset) {
    json freq = json::array(), psd = json::array();
    for (double w : wt.trace.grid) freq.push_back(rad_to_hz(w));
    for (double v : wt.trace.values_sn) psd.push_back(v);
    traces.push_back({{"freq_hz", freq},
                      {"psd_sn", psd},
                      {"angle_rad", wt.trace.angle},
                      {"n_avg", wt.n_avg}});
  }
  return {{"traces", traces}};
}

std::vector<WeightedTrace> dataset_from_json(const json& j) {
  const json& traces = j.contains("traces") ? j.at("traces") : j;
  if (!traces.is_array()) throw ConfigError("dataset must contain a \"traces\" array");
  std::vector<WeightedTrace> dataset;
  for (const auto& tj : traces) {
    WeightedTrace wt;
    for (double f : require_number_array(tj, "freq_hz")) wt.trace.grid.push_back(hz_to_rad(f));
    wt.trace.values_sn = require_number_array(tj, "psd_sn");
    wt.trace.angle = number_or(tj, "angle_rad", 0.0);
    wt.n_avg = number_or(tj, "n_avg", 1.0);
    if (wt.trace.grid.size() != wt.trace.values_sn.size())
      throw ConfigError("trace freq_hz and psd_sn must have equal length");
    dataset.push_back(std::move(wt));
  }
  return dataset;
}

FitProblem fit_problem_from_json(const json& j) {
  FitProblem problem;
  if (!j.contains("initial")) throw ConfigError("fit problem must contain \"initial\"");
  problem.initial = model_from_json(j.at("initial"));
  if (!j.contains("traces")) throw ConfigError("fit problem must contain \"traces\"");
  problem.dataset = dataset_from_json(j);
  if (j.contains("initial_angles_rad"))
    problem.initial_angles = require_number_array(j, "initial_angles_rad");

  if (j.contains("free")) {
    const json& f = j.at("free");
    problem.free.omega = mask_from_json(f, "omega", problem.free.omega);
    problem.free.gamma_meas = mask_from_json(f, "gamma_meas", problem.free.gamma_meas);
    problem.free.zeta = mask_from_json(f, "zeta", problem.free.zeta);
    problem.free.gamma0 = mask_from_json(f, "gamma0", problem.free.gamma0);
    if (f.contains("angles")) problem.free.angles = f.at("angles").get<bool>();
    if (f.contains("extraneous_amplitude"))
      problem.free.extraneous_amplitude = f.at("extraneous_amplitude").get<bool>();
    if (f.contains("extraneous_width"))
      problem.free.extraneous_width = f.at("extraneous_width").get<bool>();
  }

  if (j.contains("angle_model")) {
    const std::string name = j.at("angle_model").get<std::string>();
    if (name == "per_trace")
      problem.angle_model = AngleModel::per_trace;
    else if (name == "affine")
      problem.angle_model = AngleModel::affine;
    else
      throw ConfigError("angle_model must be \"per_trace\" or \"affine\"");
  }

  if (j.contains("response_correction") && !j.at("response_correction").is_null()) {
    GainCurve curve;
    for (double f : require_number_array(j.at("response_correction"), "freq_hz"))
      curve.freq.push_back(hz_to_rad(f));
    curve.gain = require_number_array(j.at("response_correction"), "gain");
    problem.response_correction = std::move(curve);
  }
  return problem;
}

json fit_result_to_json(const FitResult& result) {
  json errors_modes = json::array();
  const size_t n_modes = result.standard_errors.omega.size();
  for (size_t i = 0; i < n_modes; ++i) {
    errors_modes.push_back({{"omega_hz", rad_to_hz(result.standard_errors.omega[i])},
                            {"gamma_meas_hz", rad_to_hz(result.standard_errors.gamma_meas[i])},
                            {"zeta", result.standard_errors.zeta[i]},
                            {"gamma0_hz", rad_to_hz(result.standard_errors.gamma0[i])}});
  }
  json errors = {{"modes", errors_modes}, {"angles_rad", result.standard_errors.angles}};
  if (result.estimates.extraneous) {
    errors["extraneous"] = {
        {"amplitude_sn", result.standard_errors.extraneous_amplitude},
        {"width_hz", rad_to_hz(result.standard_errors.extraneous_width)}};
  }
  return {{"converged", result.converged},
          {"reason", result.reason},
          {"iterations", result.iterations},
          {"cost", result.cost},
          {"model", model_to_json(result.estimates)},
          {"angles_rad", result.angles},
          {"standard_errors", errors},
          {"per_trace_mean_sq_residual", result.per_trace_mean_sq_residual},
          {"cost_history", result.cost_history}};
}

TophatRequest tophat_request_from_json(const json& j) {
  TophatRequest req;
  req.w_in = 1e-3 * require_number(j, "w_in_mm");
  req.fan_angle = require_number(j, "fan_angle_rad");
  req.f1 = 1e-3 * require_number(j, "f1_mm");
  if (j.contains("f2_mm") && !j.at("f2_mm").is_null())
    req.f2 = 1e-3 * j.at("f2_mm").get<double>();
  req.focal1 = 1e-3 * require_number(j, "F1_mm");
  req.focal2 = 1e-3 * require_number(j, "F2_mm");
  if (j.contains("invert")) {
    const auto& inv = j.at("invert");
    if (inv.is_boolean()) {
      req.inversion = inv.get<bool>() ? SetupInversion::inverted : SetupInversion::none;
    } else if (inv.is_string() && inv.get<std::string>() == "auto") {
      req.inversion = SetupInversion::automatic;
    } else {
      throw ConfigError("invert must be true, false, or \"auto\"");
    }
  }
  return req;
}

json tophat_design_to_json(const TophatDesign& design) {
  json table = json::array();
  for (const auto& point : trace_solved_setup(design)) {
    table.push_back({{"element", point.element},
                     {"z_mm", 1e3 * point.z},
                     {"height_mm", 1e3 * point.ray.height},
                     {"slope_rad", point.ray.slope}});
  }
  const auto simple = trace_simple_setup(design.w_in, design.fan_angle, design.f1, design.f2);
  return {{"w_in_mm", 1e3 * design.w_in},
          {"fan_angle_rad", design.fan_angle},
          {"f1_mm", 1e3 * design.f1},
          {"f2_mm", 1e3 * design.f2},
          {"F1_mm", 1e3 * design.focal1},
          {"F2_mm", 1e3 * design.focal2},
          {"L1_mm", 1e3 * design.l1},
          {"L2_mm", 1e3 * design.l2},
          {"L3_mm", 1e3 * design.l3},
          {"residual_max", design.residual},
          {"inverted", design.inverted},
          {"collimated_exit_slope_rad", simple.back().ray.slope},
          {"ray_table", table}};
}

}  // namespace spinsim::json_io
