#pragma once

#include <map>
#include <optional>
#include <vector>

namespace spinsim {

// One collective oscillator mode. All rates are angular (rad/s). The sign of
// omega encodes the sign of the effective mass of the oscillator.
struct ModeParams {
  double omega = 0.0;       // resonance frequency, signed
  double gamma0 = 0.0;      // intrinsic FWHM damping rate, >= 0
  double gamma_meas = 0.0;  // measurement rate, >= 0
  double zeta = 0.0;        // dynamical-backaction coefficient, |zeta| <= 1
  double n_th = 0.0;        // thermal bath occupancy, >= 0

  void validate() const;  // throws ConfigError
};

// Rates derived from a single mode:
//   gamma_th  = (2 n_th + 1) gamma0
//   gamma_dba = 2 zeta gamma_meas            (signed; optical (anti)damping)
//   gamma_qba = gamma_meas (1 + zeta^2)
//   c_q       = gamma_meas / gamma_th        (+inf when gamma_th == 0)
//   gamma_total = gamma0 + gamma_dba
//   gamma_dec   = gamma_th + gamma_qba
struct DerivedRates {
  double gamma_th = 0.0;
  double gamma_dba = 0.0;
  double gamma_qba = 0.0;
  double c_q = 0.0;
  double gamma_total = 0.0;
  double gamma_dec = 0.0;
};

DerivedRates derived_rates(const ModeParams& mode);

// sqrt(f(f+1) - m(m+1)) for the transition m -> m+1; requires -f <= m <= f-1.
double clebsch_coefficient(int f, int m);

// Gaussian extraneous noise riding on the P quadrature of the output light,
// A_b exp(-(w - center)^2 / (2 width^2)) in shot-noise units.
struct ExtraneousNoiseSpec {
  double amplitude = 0.0;  // on-resonance magnitude, shot-noise units, >= 0
  double width = 0.0;      // rad/s, > 0
  double center = 0.0;     // rad/s

  void validate() const;
};

// The complete input to any spectrum computation: an ordered set of modes
// probed by the same traveling field, detection efficiency, and an optional
// extraneous-noise term. Immutable value object after construction.
struct EnsembleModel {
  std::vector<ModeParams> modes;
  double eta = 1.0;  // detection efficiency in [0, 1]
  std::optional<ExtraneousNoiseSpec> extraneous;

  static constexpr double shot_noise = 0.25;  // two-sided vacuum level

  void validate() const;

  double total_gamma_meas() const;     // sum of mode measurement rates
  double total_gamma_th() const;       // Gamma-weighted thermal decoherence
  double total_cooperativity() const;  // total Gamma / weighted gamma_th
  double weighted_omega() const;       // Gamma-weighted mean resonance
};

// Level populations of one ground-state manifold with total angular momentum
// F, plus the common couplings. Each transition m -> m+1 with a positive
// population difference contributes one collective mode.
struct CesiumLevelSpec {
  int f_number = 4;
  std::vector<double> populations;  // N_m for m = -F..F, size 2F+1
  double larmor = 0.0;              // rad/s, signed
  double split_qz = 0.0;            // quadratic Zeeman coefficient, rad/s per (2m+1)
  double split_ts = 0.0;            // tensor Stark coefficient, rad/s per (2m+1)
  double rate_scale = 0.0;          // measurement rate per unit C_m^2 dN_m, rad/s
  double zeta_common = 0.0;
  double gamma0 = 0.0;              // common intrinsic damping, rad/s
  std::map<int, double> omega_overrides;  // optional per-m frequency, rad/s

  void validate() const;
};

// Builds the multimode model:
//   omega_m = larmor + (split_qz + split_ts) (2m+1)   unless overridden
//   Gamma_m = rate_scale C_m^2 dN_m
//   zeta_m  = zeta_common (2m+1) / (2F-1)
//   n_th,m  = N_m / dN_m
// Levels with dN_m = 0 and N_m = 0 contribute no mode; dN_m <= 0 with atoms
// present is rejected (the linearized mode is undefined there).
// Detection efficiency of the result defaults to 1; set it afterwards.
EnsembleModel build_cesium_ensemble(const CesiumLevelSpec& spec);

}  // namespace spinsim
