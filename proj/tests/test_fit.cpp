#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "spinsim/errors.hpp"
#include "spinsim/fit.hpp"
#include "spinsim/model.hpp"
#include "spinsim/spectrum.hpp"
#include "spinsim/units.hpp"

using namespace spinsim;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<double> linspace(double lo, double hi, size_t n) {
  std::vector<double> grid(n);
  for (size_t k = 0; k < n; ++k)
    grid[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
  return grid;
}

std::vector<double> uniform_angles(size_t n) {
  std::vector<double> a(n);
  for (size_t k = 0; k < n; ++k) a[k] = kPi * static_cast<double>(k) / static_cast<double>(n);
  return a;
}

EnsembleModel reference_model() {
  ModeParams mode;
  mode.omega = hz_to_rad(1.37e6);
  mode.gamma_meas = hz_to_rad(13e3);
  mode.n_th = 0.9;
  mode.gamma0 = mode.gamma_meas / (11.0 * 2.8);
  EnsembleModel model;
  model.modes.push_back(mode);
  model.eta = 0.91;
  return model;
}

std::vector<double> reference_grid(const EnsembleModel& model, size_t n) {
  const double center = model.modes[0].omega;
  const double span = hz_to_rad(60e3);
  return linspace(center - span, center + span, n);
}

}  // namespace

TEST_CASE("synthesize: deterministic per seed") {
  const EnsembleModel model = reference_model();
  const auto grid = reference_grid(model, 64);
  const auto angles = uniform_angles(3);
  const auto a = synthesize_dataset(model, angles, grid, 100.0, 123);
  const auto b = synthesize_dataset(model, angles, grid, 100.0, 123);
  const auto c = synthesize_dataset(model, angles, grid, 100.0, 124);
  REQUIRE(a.size() == b.size());
  bool identical = true, different = false;
  for (size_t t = 0; t < a.size(); ++t) {
    identical &= a[t].trace.values_sn == b[t].trace.values_sn;
    different |= a[t].trace.values_sn != c[t].trace.values_sn;
  }
  CHECK(identical);
  CHECK(different);
}

TEST_CASE("synthesize: periodogram scatter scales as 1/sqrt(n_avg)") {
  const EnsembleModel model = reference_model();
  const auto grid = reference_grid(model, 600);
  const auto angles = uniform_angles(2);
  const double n_avg = 1e4;
  const auto dataset = synthesize_dataset(model, angles, grid, n_avg, 9001);

  SpectrumRequest req;
  req.grid = grid;
  req.angles = angles;
  const auto truth = homodyne_psd(model, req);

  double sum = 0.0, sum2 = 0.0;
  size_t count = 0;
  for (size_t t = 0; t < dataset.size(); ++t) {
    for (size_t k = 0; k < grid.size(); ++k) {
      const double ratio = dataset[t].trace.values_sn[k] / truth[t].values_sn[k];
      sum += ratio;
      sum2 += ratio * ratio;
      ++count;
    }
  }
  REQUIRE(count >= 1000);
  const double mean = sum / count;
  const double stddev = std::sqrt(sum2 / count - mean * mean);
  CHECK(mean == doctest::Approx(1.0).epsilon(0.01));
  CHECK(stddev == doctest::Approx(1.0 / std::sqrt(n_avg)).epsilon(0.10));
}

TEST_CASE("synthesize: one bin averaged over many seeds recovers the truth") {
  EnsembleModel model = reference_model();
  const std::vector<double> grid = {model.modes[0].omega};
  const std::vector<double> angles = {0.0};

  SpectrumRequest req;
  req.grid = grid;
  req.angles = angles;
  const double truth = homodyne_psd(model, req)[0].values_sn[0];

  const size_t n_seeds = 10000;
  const double n_avg = 1.0;
  double sum = 0.0;
  for (size_t seed = 0; seed < n_seeds; ++seed)
    sum += synthesize_dataset(model, angles, grid, n_avg, seed)[0].trace.values_sn[0];
  const double mean = sum / static_cast<double>(n_seeds);
  const double standard_error = truth / std::sqrt(n_avg * n_seeds);
  CHECK(std::abs(mean - truth) <= 3.0 * standard_error);
}

TEST_CASE("response correction") {
  PsdTrace trace;
  trace.grid = linspace(hz_to_rad(1e5), hz_to_rad(1e7), 40);
  trace.values_sn.assign(40, 2.0);

  GainCurve unit;
  unit.freq = {hz_to_rad(1e4), hz_to_rad(1e8)};
  unit.gain = {1.0, 1.0};
  const auto same = apply_response_correction(trace, unit);
  for (double v : same.values_sn) CHECK(v == 2.0);

  // a single-pole low-pass applied and then divided out
  const double wc = hz_to_rad(5e6);
  GainCurve lowpass;
  lowpass.freq = trace.grid;
  for (double w : trace.grid) lowpass.gain.push_back(1.0 / (1.0 + (w / wc) * (w / wc)));
  PsdTrace filtered = trace;
  for (size_t k = 0; k < filtered.grid.size(); ++k)
    filtered.values_sn[k] *= lowpass.gain[k];
  const auto recovered = apply_response_correction(filtered, lowpass);
  for (size_t k = 0; k < recovered.grid.size(); ++k)
    CHECK(std::abs(recovered.values_sn[k] - trace.values_sn[k]) <= 1e-12 * trace.values_sn[k]);

  GainCurve bad = unit;
  bad.gain[1] = 0.0;
  CHECK_THROWS_AS(apply_response_correction(trace, bad), ConfigError);
  GainCurve narrow;
  narrow.freq = {trace.grid[5], trace.grid[10]};
  narrow.gain = {1.0, 1.0};
  CHECK_THROWS_AS(apply_response_correction(trace, narrow), ConfigError);
}

TEST_CASE("fit: starting at the truth on noiseless data converges immediately") {
  const EnsembleModel model = reference_model();
  const auto grid = reference_grid(model, 101);
  const auto angles = uniform_angles(4);

  SpectrumRequest req;
  req.grid = grid;
  req.angles = angles;
  const auto truth = homodyne_psd(model, req);

  FitProblem problem;
  for (size_t t = 0; t < truth.size(); ++t) problem.dataset.push_back({truth[t], 1000.0});
  problem.initial = model;
  problem.initial_angles = angles;

  const FitResult result = global_fit(problem);
  CHECK(result.converged);
  CHECK(result.iterations <= 2);
  CHECK(result.cost <= 1e-16);
}

TEST_CASE("fit: all parameters fixed returns the initial guess") {
  const EnsembleModel model = reference_model();
  const auto grid = reference_grid(model, 51);
  const auto angles = uniform_angles(2);
  FitProblem problem;
  problem.dataset = synthesize_dataset(model, angles, grid, 100.0, 5);
  problem.initial = model;
  problem.free.omega = {false};
  problem.free.gamma_meas = {false};
  problem.free.zeta = {false};
  problem.free.gamma0 = {false};
  problem.free.angles = false;

  const FitResult result = global_fit(problem);
  CHECK(result.converged);
  CHECK(result.iterations == 0);
  CHECK(result.reason == "no free parameters");
  CHECK(result.estimates.modes[0].gamma_meas == model.modes[0].gamma_meas);
  CHECK(result.cost > 0.0);
  CHECK(result.cost_history.size() == 1);
}

TEST_CASE("fit: cost never increases across accepted iterations") {
  const EnsembleModel model = reference_model();
  const auto grid = reference_grid(model, 151);
  const auto angles = uniform_angles(5);
  FitProblem problem;
  problem.dataset = synthesize_dataset(model, angles, grid, 500.0, 42);
  EnsembleModel init = model;
  init.modes[0].gamma_meas *= 1.2;
  init.modes[0].gamma0 *= 0.8;
  problem.initial = init;
  problem.initial_angles = angles;

  const FitResult result = global_fit(problem);
  CHECK(result.converged);
  REQUIRE(result.cost_history.size() >= 2);
  for (size_t k = 1; k < result.cost_history.size(); ++k)
    CHECK(result.cost_history[k] <= result.cost_history[k - 1]);
}

TEST_CASE("fit: estimates do not depend on the trace order") {
  const EnsembleModel model = reference_model();
  const auto grid = reference_grid(model, 101);
  const auto angles = uniform_angles(5);
  auto dataset = synthesize_dataset(model, angles, grid, 300.0, 7);

  EnsembleModel init = model;
  init.modes[0].gamma_meas *= 1.15;
  init.modes[0].omega += 0.3 * model.modes[0].gamma0;

  FitProblem problem;
  problem.dataset = dataset;
  problem.initial = init;
  problem.initial_angles = angles;
  const FitResult base = global_fit(problem);

  // rotate the trace order
  FitProblem shuffled = problem;
  std::rotate(shuffled.dataset.begin(), shuffled.dataset.begin() + 2, shuffled.dataset.end());
  std::rotate(shuffled.initial_angles.begin(), shuffled.initial_angles.begin() + 2,
              shuffled.initial_angles.end());
  const FitResult rotated = global_fit(shuffled);

  CHECK(base.cost == rotated.cost);
  CHECK(base.estimates.modes[0].omega == rotated.estimates.modes[0].omega);
  CHECK(base.estimates.modes[0].gamma_meas == rotated.estimates.modes[0].gamma_meas);
  CHECK(base.estimates.modes[0].gamma0 == rotated.estimates.modes[0].gamma0);
  // per-trace outputs follow the input order: rotated trace i is base trace i+2
  const size_t n = problem.dataset.size();
  for (size_t t = 0; t < n; ++t) {
    CHECK(rotated.angles[t] == base.angles[(t + 2) % n]);
    CHECK(rotated.per_trace_mean_sq_residual[t] ==
          base.per_trace_mean_sq_residual[(t + 2) % n]);
  }
}

TEST_CASE("fit: quick single-mode round trip") {
  const EnsembleModel model = reference_model();
  const auto grid = reference_grid(model, 151);
  const auto angles = uniform_angles(5);
  FitProblem problem;
  problem.dataset = synthesize_dataset(model, angles, grid, 300.0, 99);
  EnsembleModel init = model;
  init.modes[0].gamma_meas *= 1.15;
  init.modes[0].gamma0 *= 0.85;
  init.modes[0].omega += 0.2 * derived_rates(model.modes[0]).gamma_total;
  init.modes[0].zeta = 0.01;
  problem.initial = init;
  for (double a : angles) problem.initial_angles.push_back(a + 0.02);

  const FitResult result = global_fit(problem);
  CHECK(result.converged);
  CHECK(result.estimates.modes[0].gamma_meas ==
        doctest::Approx(model.modes[0].gamma_meas).epsilon(0.02));
  const double bins = static_cast<double>(grid.size() * angles.size());
  CHECK(result.cost / bins == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("fit: standard errors scale as 1/sqrt(n_avg)") {
  const EnsembleModel model = reference_model();
  const auto grid = reference_grid(model, 151);
  const auto angles = uniform_angles(4);

  auto run = [&](double n_avg, uint64_t seed) {
    FitProblem problem;
    problem.dataset = synthesize_dataset(model, angles, grid, n_avg, seed);
    EnsembleModel init = model;
    init.modes[0].gamma_meas *= 1.05;
    problem.initial = init;
    problem.initial_angles = angles;
    const FitResult r = global_fit(problem);
    REQUIRE(r.converged);
    return r.standard_errors.gamma_meas[0];
  };

  const double se_low = run(100.0, 11);
  const double se_high = run(10000.0, 11);
  CHECK(se_low / se_high == doctest::Approx(10.0).epsilon(0.30));
}

TEST_CASE("fit: validation errors") {
  const EnsembleModel model = reference_model();
  FitProblem empty;
  empty.initial = model;
  CHECK_THROWS_AS(global_fit(empty), ConfigError);

  // fewer data points than free parameters
  FitProblem tiny;
  tiny.initial = model;
  WeightedTrace wt;
  wt.trace.grid = {1.0, 2.0};
  wt.trace.values_sn = {1.0, 1.0};
  wt.n_avg = 1.0;
  tiny.dataset.push_back(wt);
  CHECK_THROWS_AS(global_fit(tiny), ConfigError);

  // unstable initial guess
  FitProblem unstable;
  unstable.initial = model;
  unstable.initial.modes[0].zeta = -0.9;
  unstable.initial.modes[0].gamma_meas = hz_to_rad(1e5);
  const auto grid = reference_grid(model, 51);
  const auto angles = uniform_angles(2);
  unstable.dataset = synthesize_dataset(model, angles, grid, 100.0, 1);
  CHECK_THROWS_AS(global_fit(unstable), ConfigError);

  // freeing extraneous parameters without an extraneous term
  FitProblem no_ext;
  no_ext.initial = model;
  no_ext.dataset = unstable.dataset;
  no_ext.free.extraneous_amplitude = true;
  CHECK_THROWS_AS(global_fit(no_ext), ConfigError);
}

TEST_CASE("fit: affine angle sweep") {
  // the data comes from a calibrated waveplate sweep phi_k = offset + k step;
  // fitting the two sweep coefficients instead of one angle per trace
  const EnsembleModel model = reference_model();
  const auto grid = reference_grid(model, 151);
  const double offset_true = 0.07, step_true = kPi / 7.0;
  std::vector<double> angles;
  for (int k = 0; k < 7; ++k) angles.push_back(offset_true + step_true * k);

  FitProblem problem;
  problem.dataset = synthesize_dataset(model, angles, grid, 2000.0, 61);
  EnsembleModel init = model;
  init.modes[0].gamma_meas *= 1.1;
  problem.initial = init;
  for (double a : angles) problem.initial_angles.push_back(a + 0.05);  // common offset error
  problem.angle_model = AngleModel::affine;

  const FitResult result = global_fit(problem);
  CHECK(result.converged);
  CHECK(result.estimates.modes[0].gamma_meas ==
        doctest::Approx(model.modes[0].gamma_meas).epsilon(0.01));
  for (size_t t = 0; t < angles.size(); ++t) {
    CHECK(result.angles[t] == doctest::Approx(angles[t]).epsilon(5e-3));
    CHECK(result.standard_errors.angles[t] > 0.0);
  }
  // the recovered sweep is affine by construction
  const double step_rec = result.angles[1] - result.angles[0];
  for (size_t t = 2; t < angles.size(); ++t)
    CHECK(result.angles[t] - result.angles[t - 1] == doctest::Approx(step_rec).epsilon(1e-12));
}

TEST_CASE("fit: free mask granularity per mode") {
  EnsembleModel model = reference_model();
  model.modes.push_back(model.modes[0]);
  model.modes[1].omega += hz_to_rad(8e3);
  model.modes[1].gamma_meas = hz_to_rad(5e3);
  const auto grid = reference_grid(model, 201);
  const auto angles = uniform_angles(6);
  FitProblem problem;
  problem.dataset = synthesize_dataset(model, angles, grid, 500.0, 3);
  EnsembleModel init = model;
  init.modes[1].gamma_meas *= 1.3;
  problem.initial = init;
  problem.initial_angles = angles;
  problem.free.omega = {false, false};
  problem.free.gamma_meas = {false, true};  // only the second rate floats
  problem.free.zeta = {false, false};
  problem.free.gamma0 = {false, false};
  problem.free.angles = false;

  const FitResult result = global_fit(problem);
  CHECK(result.converged);
  CHECK(result.estimates.modes[0].gamma_meas == model.modes[0].gamma_meas);
  CHECK(result.estimates.modes[1].gamma_meas ==
        doctest::Approx(model.modes[1].gamma_meas).epsilon(0.05));
  CHECK(result.standard_errors.gamma_meas[0] == 0.0);
  CHECK(result.standard_errors.gamma_meas[1] > 0.0);
}
