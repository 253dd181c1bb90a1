#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spinsim/fit.hpp"
#include "spinsim/model.hpp"
#include "spinsim/optics.hpp"
#include "spinsim/spectrum.hpp"

// JSON schemas spoken at the tool boundaries. Frequencies are ordinary Hz
// here and angular rad/s inside; lengths are mm here and m inside.
namespace spinsim::json_io {

using nlohmann::json;

json model_to_json(const EnsembleModel& model);
EnsembleModel model_from_json(const json& j);

CesiumLevelSpec cesium_from_json(const json& j);
// { "cesium": {...}, "eta": 0.91, "extraneous": {...} | null }
EnsembleModel ensemble_config_to_model(const json& j);

// Either an array of Hz values or { "start_hz", "stop_hz", "points" }.
std::vector<double> grid_from_json(const json& j);  // returns rad/s
// Either an array of radian angles or { "count": n } for n uniform in [0, pi).
std::vector<double> angles_from_json(const json& j);

SpectrumMethod method_from_string(const std::string& name);

// { "model": {...}, "grid": ..., "angles": ..., "n_avg": n }
struct SynthConfig {
  EnsembleModel model;
  std::vector<double> grid;
  std::vector<double> angles;
  double n_avg = 1.0;
};
SynthConfig synth_config_from_json(const json& j);

json dataset_to_json(const std::vector<WeightedTrace>& dataset);
std::vector<WeightedTrace> dataset_from_json(const json& j);

FitProblem fit_problem_from_json(const json& j);
json fit_result_to_json(const FitResult& result);

struct TophatRequest {
  double w_in = 0.0;       // m
  double fan_angle = 0.0;  // rad
  double f1 = 0.0;         // m
  std::optional<double> f2;  // m; computed from the collimation formula when absent
  double focal1 = 0.0;     // m
  double focal2 = 0.0;     // m
  SetupInversion inversion = SetupInversion::none;
};
TophatRequest tophat_request_from_json(const json& j);
json tophat_design_to_json(const TophatDesign& design);

}  // namespace spinsim::json_io
