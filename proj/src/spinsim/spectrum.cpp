#include "spinsim/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "spinsim/errors.hpp"
#include "spinsim/units.hpp"

namespace spinsim {

namespace {

using Complex = std::complex<double>;
using MatrixXd = Eigen::MatrixXd;
using MatrixXcd = Eigen::MatrixXcd;

constexpr Complex kI{0.0, 1.0};

void check_grid(std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("frequency grid must be non-empty");
  for (size_t k = 0; k < grid.size(); ++k) {
    if (!std::isfinite(grid[k])) throw ConfigError("frequency grid must be finite");
    if (k > 0 && !(grid[k] > grid[k - 1]))
      throw ConfigError("frequency grid must be strictly increasing");
  }
}

// Drift matrix of the stacked mode quadratures (X_1, P_1, ..., X_n, P_n):
//   dX_i/dt =  w_i P_i                      - sum_j zeta_i sqrt(G_i G_j) X_j
//   dP_i/dt = -w_i X_i - gamma0_i P_i       - sum_j zeta_j sqrt(G_i G_j) P_j
// The intrinsic damping acts on the momentum row so that a single undriven
// mode has exactly the susceptibility omega_s/(omega_s^2 - w^2 - i w gamma0);
// the matching thermal force enters the momentum equation with two-sided PSD
// (2 n_th + 1) gamma0.
MatrixXd drift_matrix(const EnsembleModel& model) {
  const size_t n = model.modes.size();
  MatrixXd a = MatrixXd::Zero(2 * n, 2 * n);
  for (size_t i = 0; i < n; ++i) {
    const auto& mi = model.modes[i];
    a(2 * i, 2 * i + 1) = mi.omega;
    a(2 * i + 1, 2 * i) = -mi.omega;
    a(2 * i + 1, 2 * i + 1) = -mi.gamma0;
    const double root_i = std::sqrt(mi.gamma_meas);
    for (size_t j = 0; j < n; ++j) {
      const auto& mj = model.modes[j];
      const double root_ij = root_i * std::sqrt(mj.gamma_meas);
      a(2 * i, 2 * j) -= mi.zeta * root_ij;
      a(2 * i + 1, 2 * j + 1) -= mj.zeta * root_ij;
    }
  }
  return a;
}

// Drive columns for (X_L^in, P_L^in).
MatrixXd light_drive(const EnsembleModel& model) {
  const size_t n = model.modes.size();
  MatrixXd b = MatrixXd::Zero(2 * n, 2);
  for (size_t i = 0; i < n; ++i) {
    const double root = std::sqrt(model.modes[i].gamma_meas);
    b(2 * i, 1) = -2.0 * model.modes[i].zeta * root;
    b(2 * i + 1, 0) = 2.0 * root;
  }
  return b;
}

// Output map: X_L^out = X_L^in - sum zeta_i sqrt(G_i) P_i,
//             P_L^out = P_L^in + sum sqrt(G_i) X_i.
MatrixXd output_map(const EnsembleModel& model) {
  const size_t n = model.modes.size();
  MatrixXd c = MatrixXd::Zero(2, 2 * n);
  for (size_t i = 0; i < n; ++i) {
    const double root = std::sqrt(model.modes[i].gamma_meas);
    c(0, 2 * i + 1) = -model.modes[i].zeta * root;
    c(1, 2 * i) = root;
  }
  return c;
}

// Diagonal of the symmetrized input spectral matrix: 1/4 for each light
// quadrature, the thermal force PSD (2 n_th + 1) gamma0 on each momentum
// force, zero on the position-force slots and all cross terms.
std::vector<double> input_weights(const EnsembleModel& model) {
  std::vector<double> w;
  w.reserve(2 + 2 * model.modes.size());
  w.push_back(kShotNoise);
  w.push_back(kShotNoise);
  for (const auto& m : model.modes) {
    w.push_back(0.0);
    w.push_back((2.0 * m.n_th + 1.0) * m.gamma0);
  }
  return w;
}

struct ExtraneousEval {
  const ExtraneousNoiseSpec* spec = nullptr;
  double operator()(double omega) const {
    return spec ? extraneous_noise_sn(*spec, omega) : 0.0;
  }
  explicit operator bool() const { return spec != nullptr; }
};

ExtraneousEval extraneous_for(const EnsembleModel& model, bool include) {
  if (include && model.extraneous) return {&*model.extraneous};
  return {};
}

}  // namespace

void SpectrumRequest::validate(const EnsembleModel& model) const {
  model.validate();
  check_grid(grid);
  if (angles.empty()) throw ConfigError("at least one quadrature angle is required");
  for (double a : angles)
    if (!std::isfinite(a)) throw ConfigError("quadrature angles must be finite");
  if (method != SpectrumMethod::full && model.modes.size() != 1)
    throw ConfigError("rwa and analytic_single_mode methods require a single-mode model");
}

std::complex<double> susceptibility(const ModeParams& mode, double omega) {
  const double os = mode.omega;
  return os / Complex(os * os - omega * omega, -omega * mode.gamma0);
}

std::complex<double> susceptibility_total(const ModeParams& mode, double omega) {
  const double os = mode.omega;
  const double gamma = derived_rates(mode).gamma_total;
  return os / Complex(os * os - omega * omega, -omega * gamma);
}

void check_stability(const EnsembleModel& model) {
  model.validate();
  const MatrixXd a = drift_matrix(model);
  const Eigen::EigenSolver<MatrixXd> es(a, /*computeEigenvectors=*/false);
  const auto& lambda = es.eigenvalues();
  const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    if (lambda[k].real() > 1e-10 * scale) {
      std::ostringstream os;
      os << "model is anti-damped: drift eigenvalue " << lambda[k].real() << " + "
         << lambda[k].imag() << "i rad/s has positive real part; no steady state exists";
      throw NumericalError(os.str());
    }
  }
}

TransferMatrices drift_and_transfer(const EnsembleModel& model, std::span<const double> grid) {
  model.validate();
  check_grid(grid);
  check_stability(model);

  const size_t n = model.modes.size();
  const MatrixXd a = drift_matrix(model);
  const MatrixXd b_light = light_drive(model);
  const MatrixXd c = output_map(model);

  // All inputs stacked: the light drive plus unit-intensity force columns.
  MatrixXcd b_all = MatrixXcd::Zero(2 * n, 2 * n + 2);
  b_all.leftCols(2) = b_light.cast<Complex>();
  b_all.rightCols(2 * n).setIdentity();

  TransferMatrices out;
  out.grid.assign(grid.begin(), grid.end());
  out.response.reserve(grid.size());

  MatrixXcd m(2 * n, 2 * n);
  for (double omega : grid) {
    m = -a.cast<Complex>();
    m.diagonal().array() -= kI * omega;
    Eigen::FullPivLU<MatrixXcd> lu(m);
    if (!lu.isInvertible()) {
      std::ostringstream os;
      os << "singular frequency-domain solve at omega = " << omega
         << " rad/s (undamped mode exactly on resonance)";
      throw NumericalError(os.str());
    }
    TransferMatrices::Block t = (c.cast<Complex>() * lu.solve(b_all)).eval();
    t(0, 0) += 1.0;  // direct feedthrough of the light inputs
    t(1, 1) += 1.0;
    out.response.push_back(std::move(t));
  }
  return out;
}

OutputSpectra output_spectra(const EnsembleModel& model, std::span<const double> grid) {
  const TransferMatrices tm = drift_and_transfer(model, grid);
  const std::vector<double> w = input_weights(model);

  OutputSpectra out;
  out.grid = tm.grid;
  out.sxx.resize(grid.size());
  out.spp.resize(grid.size());
  out.sxp.resize(grid.size());
  for (size_t k = 0; k < grid.size(); ++k) {
    const auto& t = tm.response[k];
    double sxx = 0.0, spp = 0.0;
    Complex sxp = 0.0;
    for (Eigen::Index col = 0; col < t.cols(); ++col) {
      const double wk = w[static_cast<size_t>(col)];
      if (wk == 0.0) continue;
      sxx += wk * std::norm(t(0, col));
      spp += wk * std::norm(t(1, col));
      sxp += wk * t(0, col) * std::conj(t(1, col));
    }
    out.sxx[k] = sxx;
    out.spp[k] = spp;
    out.sxp[k] = sxp;
  }
  return out;
}

std::vector<PsdTrace> homodyne_psd(const EnsembleModel& model, const SpectrumRequest& request) {
  request.validate(model);

  if (request.method == SpectrumMethod::analytic_single_mode ||
      request.method == SpectrumMethod::rwa) {
    if (request.method == SpectrumMethod::rwa && model.eta != 1.0)
      throw ConfigError("rwa method assumes lossless detection (eta = 1)");
    const ModeParams& mode = model.modes.front();
    const ExtraneousEval ext = extraneous_for(model, request.include_extraneous);
    std::vector<PsdTrace> traces;
    traces.reserve(request.angles.size());
    for (double phi : request.angles) {
      PsdTrace trace = request.method == SpectrumMethod::rwa
                           ? rwa_psd(mode, phi, request.grid)
                           : analytic_single_mode_psd(mode, model.eta, phi, request.grid);
      if (ext) {
        const double proj = model.eta * std::cos(phi) * std::cos(phi);
        for (size_t k = 0; k < trace.grid.size(); ++k)
          trace.values_sn[k] += proj * ext(trace.grid[k]);
      }
      traces.push_back(std::move(trace));
    }
    return traces;
  }

  const OutputSpectra spectra = output_spectra(model, request.grid);
  const ExtraneousEval ext = extraneous_for(model, request.include_extraneous);
  const double eta = model.eta;

  std::vector<PsdTrace> traces;
  traces.reserve(request.angles.size());
  for (double phi : request.angles) {
    const double s = std::sin(phi), c = std::cos(phi);
    PsdTrace trace;
    trace.angle = phi;
    trace.grid = spectra.grid;
    trace.values_sn.resize(spectra.grid.size());
    for (size_t k = 0; k < spectra.grid.size(); ++k) {
      const double spp_k =
          spectra.spp[k] + (ext ? kShotNoise * ext(spectra.grid[k]) : 0.0);
      const double quad = s * s * spectra.sxx[k] + c * c * spp_k +
                          2.0 * s * c * spectra.sxp[k].real();
      trace.values_sn[k] = ((1.0 - eta) * kShotNoise + eta * quad) / kShotNoise;
    }
    traces.push_back(std::move(trace));
  }
  return traces;
}

PsdTrace analytic_single_mode_psd(const ModeParams& mode, double eta, double phi,
                                  std::span<const double> grid) {
  mode.validate();
  check_grid(grid);
  if (mode.zeta != 0.0)
    throw ConfigError("closed-form single-mode PSD assumes a pure position measurement (zeta = 0)");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in [0, 1]");

  const double g = mode.gamma_meas;
  const double gth = derived_rates(mode).gamma_th;
  const double sin2phi = std::sin(2.0 * phi);
  const double cos2 = std::cos(phi) * std::cos(phi);

  PsdTrace trace;
  trace.angle = phi;
  trace.grid.assign(grid.begin(), grid.end());
  trace.values_sn.resize(grid.size());
  for (size_t k = 0; k < grid.size(); ++k) {
    const Complex chi = susceptibility(mode, grid[k]);
    trace.values_sn[k] = 1.0 + 2.0 * eta * g * chi.real() * sin2phi +
                         4.0 * eta * g * (g + gth) * std::norm(chi) * cos2;
  }
  return trace;
}

PsdTrace optimum_envelope(double omega_s, double gamma_meas, double gamma_th, double eta,
                          std::span<const double> grid) {
  check_grid(grid);
  if (gamma_meas < 0.0 || gamma_th < 0.0) throw ConfigError("rates must be >= 0");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in [0, 1]");

  const double g_sum = gamma_meas + gamma_th;
  const double center = std::abs(omega_s);

  PsdTrace trace;
  trace.grid.assign(grid.begin(), grid.end());
  trace.values_sn.resize(grid.size());
  for (size_t k = 0; k < grid.size(); ++k) {
    if (g_sum == 0.0) {
      trace.values_sn[k] = 1.0;
      continue;
    }
    const double x = (grid[k] - center) / g_sum;
    const double d = 1.0 / (1.0 + std::sqrt(1.0 + 4.0 * x * x));
    trace.values_sn[k] = 1.0 - 2.0 * eta * (gamma_meas / g_sum) * d;
  }
  return trace;
}

PsdTrace optimum_envelope(const ModeParams& mode, double eta, std::span<const double> grid) {
  mode.validate();
  return optimum_envelope(mode.omega, mode.gamma_meas, derived_rates(mode).gamma_th, eta, grid);
}

PsdTrace optimum_envelope(const EnsembleModel& model, std::span<const double> grid) {
  model.validate();
  return optimum_envelope(model.weighted_omega(), model.total_gamma_meas(),
                          model.total_gamma_th(), model.eta, grid);
}

PsdTrace engine_min_envelope(const EnsembleModel& model, std::span<const double> grid,
                             bool include_extraneous, std::vector<double>* phi_min) {
  const OutputSpectra spectra = output_spectra(model, grid);
  const ExtraneousEval ext = extraneous_for(model, include_extraneous);
  const double eta = model.eta;

  PsdTrace trace;
  trace.grid = spectra.grid;
  trace.values_sn.resize(spectra.grid.size());
  if (phi_min) phi_min->resize(spectra.grid.size());

  // S(phi) = offset + b sin(2 phi) + c cos(2 phi) has exact minimum
  // offset - hypot(b, c) at 2 phi = atan2(-b, -c).
  for (size_t k = 0; k < spectra.grid.size(); ++k) {
    const double spp_k = spectra.spp[k] + (ext ? kShotNoise * ext(spectra.grid[k]) : 0.0);
    const double offset = (1.0 - eta) * kShotNoise + eta * 0.5 * (spectra.sxx[k] + spp_k);
    const double b = eta * spectra.sxp[k].real();
    const double c = eta * 0.5 * (spp_k - spectra.sxx[k]);
    trace.values_sn[k] = (offset - std::hypot(b, c)) / kShotNoise;
    if (phi_min) (*phi_min)[k] = 0.5 * std::atan2(-b, -c);
  }
  return trace;
}

PsdTrace rwa_psd(const ModeParams& mode, double phi, std::span<const double> grid) {
  mode.validate();
  check_grid(grid);

  // Negative-mass oscillators map exactly onto positive-mass ones with the
  // detection angle reflected.
  if (mode.omega < 0.0) {
    ModeParams mirrored = mode;
    mirrored.omega = -mode.omega;
    PsdTrace trace = rwa_psd(mirrored, -phi, grid);
    trace.angle = phi;
    return trace;
  }

  PsdTrace trace;
  trace.angle = phi;
  trace.grid.assign(grid.begin(), grid.end());
  trace.values_sn.assign(grid.size(), 1.0);

  const double g = mode.gamma_meas;
  if (g == 0.0) return trace;  // no interaction: shot noise at every quadrature

  const double gamma = mode.gamma0 + 2.0 * mode.zeta * g;
  if (gamma <= 0.0)
    throw NumericalError("anti-damped mode (gamma0 + 2 zeta Gamma <= 0): no steady-state spectrum");

  const double gth = derived_rates(mode).gamma_th;
  const Complex envelope = (1.0 + mode.zeta) + (1.0 - mode.zeta) * std::exp(-2.0 * kI * phi);
  const Complex a = kI * g * (1.0 + mode.zeta) * envelope;
  // |A chi|^2 (1 + (gth + g0)/(G(1+zeta))) without the 0/0 at zeta = -1.
  const double force_factor =
      std::norm(a) + g * (1.0 + mode.zeta) * std::norm(envelope) * (gth + mode.gamma0);

  for (size_t k = 0; k < grid.size(); ++k) {
    const double dw = grid[k] - mode.omega;
    const Complex chi = -0.5 / Complex(dw, 0.5 * gamma);
    trace.values_sn[k] = 1.0 + 2.0 * (a * chi).real() + force_factor * std::norm(chi);
  }
  return trace;
}

std::vector<double> rwa_phi_min(const ModeParams& mode, std::span<const double> grid) {
  mode.validate();
  check_grid(grid);
  const double pi = 3.14159265358979323846;
  const double center = std::abs(mode.omega);
  const double gdec = derived_rates(mode).gamma_dec;

  // tan(2 phi) = -2 dw / gamma_dec fixes the stationary quadratures only up
  // to a pi/2 branch; the minimizing branch runs through phi = pi/2 at
  // resonance (dynamical backaction squeezes the X quadrature there), not
  // phi = 0 where the oscillator signal peaks. Kept in (pi/4, 3 pi/4),
  // continuous through resonance.
  std::vector<double> angles(grid.size());
  for (size_t k = 0; k < grid.size(); ++k) {
    const double dw = grid[k] - center;
    double phi = 0.5 * pi + 0.5 * std::atan2(-2.0 * dw, gdec);
    if (mode.omega < 0.0) phi = pi - phi;  // mass flip reflects the angle
    angles[k] = phi;
  }
  return angles;
}

double rwa_min_approx(const ModeParams& mode) {
  const DerivedRates r = derived_rates(mode);
  const double denom = mode.gamma0 + r.gamma_dec;
  if (denom <= 0.0) throw NumericalError("mode has no decoherence channel; minimum undefined");
  return 1.0 - mode.gamma_meas / denom - (mode.gamma0 + r.gamma_th) * r.gamma_dba / (denom * denom);
}

double extraneous_noise_sn(const ExtraneousNoiseSpec& spec, double omega) {
  const double d = omega - spec.center;
  return spec.amplitude * std::exp(-d * d / (2.0 * spec.width * spec.width));
}

PsdTrace extraneous_noise(const ExtraneousNoiseSpec& spec, std::span<const double> grid) {
  spec.validate();
  check_grid(grid);
  PsdTrace trace;
  trace.grid.assign(grid.begin(), grid.end());
  trace.values_sn.resize(grid.size());
  for (size_t k = 0; k < grid.size(); ++k)
    trace.values_sn[k] = extraneous_noise_sn(spec, grid[k]);
  return trace;
}

EnsembleModel fast_mode_as_oscillator(const EnsembleModel& model, const ModeParams& fast) {
  model.validate();
  fast.validate();
  if (model.extraneous)
    throw ConfigError(
        "model already carries Gaussian extraneous noise; adding the fast mode "
        "as an oscillator would double-count it");
  EnsembleModel out = model;
  out.modes.push_back(fast);
  return out;
}

double backaction_imprecision_product(double eta, double s_pp_ext_sn, double zeta, double c_q) {
  if (!(eta > 0.0) || eta > 1.0)
    throw ConfigError("eta must lie in (0, 1]: no measurement without detection");
  if (s_pp_ext_sn < 0.0) throw ConfigError("extraneous noise must be >= 0");
  if (!(c_q > 0.0)) throw ConfigError("quantum cooperativity must be > 0");
  const double inv_cq = std::isinf(c_q) ? 0.0 : 1.0 / c_q;
  return std::sqrt((1.0 / eta) * (1.0 + s_pp_ext_sn) * (1.0 + zeta * zeta + inv_cq));
}

}  // namespace spinsim
