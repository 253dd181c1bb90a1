#pragma once

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "spinsim/model.hpp"

namespace spinsim {

enum class SpectrumMethod { full, rwa, analytic_single_mode };

struct SpectrumRequest {
  std::vector<double> grid;    // angular frequencies, rad/s, strictly increasing
  std::vector<double> angles;  // quadrature angles, rad
  SpectrumMethod method = SpectrumMethod::full;
  bool include_extraneous = false;

  void validate(const EnsembleModel& model) const;
};

// Two-sided PSD on a frequency grid, in shot-noise units (vacuum = 1),
// tagged with the detection quadrature angle.
struct PsdTrace {
  std::vector<double> grid;       // rad/s
  std::vector<double> values_sn;  // >= 1 - eta everywhere
  double angle = 0.0;             // rad
};

// chi[w] = omega_s / (omega_s^2 - w^2 - i w gamma0), the force susceptibility
// of a single mode with intrinsic damping only.
std::complex<double> susceptibility(const ModeParams& mode, double omega);

// Same expression with the dynamically broadened linewidth gamma0 + gamma_dba.
std::complex<double> susceptibility_total(const ModeParams& mode, double omega);

// Frequency-resolved linear response of the output light quadratures.
// Row 0 is X_L^out, row 1 is P_L^out. Columns are the stacked inputs
// (X_L^in, P_L^in, F_1^X, F_1^P, ..., F_n^X, F_n^P), with the direct
// feedthrough of the light inputs included. At all Gamma_i = 0 this is the
// identity on the light block and zero elsewhere.
struct TransferMatrices {
  using Block = Eigen::Matrix<std::complex<double>, 2, Eigen::Dynamic>;
  std::vector<double> grid;
  std::vector<Block> response;  // one 2 x (2 + 2n) block per grid point
};

TransferMatrices drift_and_transfer(const EnsembleModel& model, std::span<const double> grid);

// Per-frequency 2x2 spectral matrix of the bare output light (unit detection
// efficiency, no extraneous noise), in absolute units (vacuum autos = 1/4).
struct OutputSpectra {
  std::vector<double> grid;
  std::vector<double> sxx;
  std::vector<double> spp;
  std::vector<std::complex<double>> sxp;
};

OutputSpectra output_spectra(const EnsembleModel& model, std::span<const double> grid);

// Homodyne PSDs at the requested quadrature angles. method full solves the
// multimode Langevin system in the frequency domain; rwa and
// analytic_single_mode dispatch to the closed forms below and require a
// single-mode model.
std::vector<PsdTrace> homodyne_psd(const EnsembleModel& model, const SpectrumRequest& request);

// Closed-form single-mode PSD for a pure position measurement (zeta = 0):
//   S_phi/SN = 1 + 2 eta G Re(chi) sin(2 phi) + 4 eta G (G + gamma_th) |chi|^2 cos(phi)^2
PsdTrace analytic_single_mode_psd(const ModeParams& mode, double eta, double phi,
                                  std::span<const double> grid);

// Optimum-quadrature envelope (imaginary part of the response neglected):
//   S_min/SN = 1 - 2 eta (G/(G+gamma_th)) D((w - |omega_s|)/(G+gamma_th)),
//   D(x) = 1 / (1 + sqrt(1 + 4 x^2))
PsdTrace optimum_envelope(double omega_s, double gamma_meas, double gamma_th, double eta,
                          std::span<const double> grid);
PsdTrace optimum_envelope(const ModeParams& mode, double eta, std::span<const double> grid);
// Effective single-oscillator form of a multimode model (total Gamma,
// weighted gamma_th, weighted resonance).
PsdTrace optimum_envelope(const EnsembleModel& model, std::span<const double> grid);

// Exact minimum over the detection angle of the full-engine PSD at each
// frequency; the minimizing angle is written to phi_min when non-null.
PsdTrace engine_min_envelope(const EnsembleModel& model, std::span<const double> grid,
                             bool include_extraneous, std::vector<double>* phi_min = nullptr);

// Single-mode homodyne spectrum under the rotating-wave approximation with
// arbitrary zeta, lossless detection:
//   S_phi/SN = 1 + 2 Re(A chi) + |A chi|^2 (1 + (gamma_th + gamma0)/(G (1+zeta)))
//   chi[w]   = -(1/2) / (dw + i gamma/2),  gamma = gamma0 + 2 zeta G
//   A        = i G (1+zeta) ((1+zeta) + (1-zeta) e^{-2 i phi})
// Refuses anti-damped modes (gamma <= 0): no steady-state spectrum exists.
PsdTrace rwa_psd(const ModeParams& mode, double phi, std::span<const double> grid);

// Frequency-dependent maximum-squeezing angle, tan(2 phi_min) = -2 dw / gamma_dec.
std::vector<double> rwa_phi_min(const ModeParams& mode, std::span<const double> grid);

// Approximate absolute minimum of the optimum-quadrature RWA spectrum,
//   S_min ~ 1 - G/(gamma_dec + gamma0) - (gamma0 + gamma_th) gamma_dba / (gamma0 + gamma_dec)^2
double rwa_min_approx(const ModeParams& mode);

// Gaussian extraneous noise in shot-noise units at a single frequency.
double extraneous_noise_sn(const ExtraneousNoiseSpec& spec, double omega);
PsdTrace extraneous_noise(const ExtraneousNoiseSpec& spec, std::span<const double> grid);

// Appends the fast-decaying mode family as one broad ordinary oscillator
// (gamma0 = bath decay rate). Refused when the model already carries the
// Gaussian extraneous term, which would double-count the same physics.
EnsembleModel fast_mode_as_oscillator(const EnsembleModel& model, const ModeParams& fast);

// Backaction-imprecision product in units of hbar/2:
//   sqrt((1/eta) (1 + S_ext/SN) (1 + zeta^2 + 1/C_q))
double backaction_imprecision_product(double eta, double s_pp_ext_sn, double zeta, double c_q);

// Refuses models whose drift matrix has an eigenvalue with positive real part
// (anti-damped: the steady-state spectrum is meaningless). Marginally stable
// models pass; an exactly resonant singular solve is reported separately.
void check_stability(const EnsembleModel& model);

}  // namespace spinsim
