#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spinsim/model.hpp"
#include "spinsim/spectrum.hpp"

namespace spinsim {

// One measured (or synthesized) trace together with the number of periodogram
// averages behind each bin; the bin variance is S^2 / n_avg.
struct WeightedTrace {
  PsdTrace trace;
  double n_avg = 1.0;
};

// Which parameters the fit may move. Mode-parameter vectors are broadcast
// when they hold a single entry, otherwise they must match the mode count.
// Detection efficiency and bath occupancies stay fixed; they come from
// independent calibrations and are degenerate with the rates otherwise.
struct FreeMask {
  std::vector<bool> omega{true};
  std::vector<bool> gamma_meas{true};
  std::vector<bool> zeta{true};
  std::vector<bool> gamma0{true};
  bool angles = true;
  bool extraneous_amplitude = false;
  bool extraneous_width = false;
};

// Multiplicative gain of the signal chain relative to the shot-noise chain,
// sampled on a frequency grid (rad/s); interpolated linearly onto trace grids.
struct GainCurve {
  std::vector<double> freq;
  std::vector<double> gain;
};

// How free detection angles are parameterized: independently per trace, or as
// the affine sweep phi_k = offset + k * step over the input trace order (a
// calibrated waveplate sequence).
enum class AngleModel { per_trace, affine };

struct FitProblem {
  std::vector<WeightedTrace> dataset;
  EnsembleModel initial;               // eta and n_th are taken as fixed from here
  std::vector<double> initial_angles;  // one per trace; empty = use trace angles
  FreeMask free;
  AngleModel angle_model = AngleModel::per_trace;
  std::optional<GainCurve> response_correction;
};

struct ParameterErrors {
  std::vector<double> omega;
  std::vector<double> gamma_meas;
  std::vector<double> zeta;
  std::vector<double> gamma0;
  std::vector<double> angles;
  double extraneous_amplitude = 0.0;
  double extraneous_width = 0.0;
};

struct FitResult {
  EnsembleModel estimates;
  std::vector<double> angles;       // per trace, input order
  ParameterErrors standard_errors;  // from the local quadratic model at the optimum
  double cost = 0.0;
  std::vector<double> per_trace_mean_sq_residual;  // weighted, ~1 for a good fit
  std::vector<double> cost_history;                // accepted iterations only
  int iterations = 0;
  bool converged = false;
  std::string reason;
};

// Global weighted least squares over all traces and bins,
//   cost = sum n_avg (S_model - S_data)^2 / S_model^2,
// minimized by damped least squares with a trust-region safeguard. Bounds
// (Gamma > 0, gamma0 > 0, |zeta| < 1) are enforced by smooth internal
// transforms. Terminates on relative cost decrease < 1e-10 or 500 iterations;
// hitting the iteration limit yields converged = false with the best
// estimates so far rather than an exception.
FitResult global_fit(const FitProblem& problem);

// Synthetic dataset: the true PSD of the model at each angle, with every bin
// multiplied by an independent gamma(n_avg, 1/n_avg) draw (mean 1), matching
// the statistics of an n_avg-average periodogram. Deterministic per seed.
std::vector<WeightedTrace> synthesize_dataset(const EnsembleModel& model,
                                              std::span<const double> angles,
                                              std::span<const double> grid, double n_avg,
                                              uint64_t seed);

// Divides the trace by the gain ratio of the signal and shot-noise chains;
// the identity when both share the chain.
PsdTrace apply_response_correction(const PsdTrace& trace, const GainCurve& gain);

}  // namespace spinsim
