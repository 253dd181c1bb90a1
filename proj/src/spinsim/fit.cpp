#include "spinsim/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "spinsim/errors.hpp"
#include "spinsim/units.hpp"

namespace spinsim {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kMaxIterations = 500;
constexpr double kRelativeCostTolerance = 1e-10;

std::vector<bool> normalize_mask(const std::vector<bool>& mask, size_t n, const char* name) {
  if (mask.empty()) return std::vector<bool>(n, false);
  if (mask.size() == 1) return std::vector<bool>(n, mask.front());
  if (mask.size() != n) {
    std::ostringstream os;
    os << "free mask for " << name << " has " << mask.size() << " entries, expected " << n;
    throw ConfigError(os.str());
  }
  return mask;
}

double interpolate_gain(const GainCurve& curve, double omega) {
  const auto& f = curve.freq;
  if (omega < f.front() || omega > f.back())
    throw ConfigError("gain curve does not cover the trace grid");
  const auto it = std::lower_bound(f.begin(), f.end(), omega);
  if (it == f.begin()) return curve.gain.front();
  const size_t hi = static_cast<size_t>(it - f.begin());
  const size_t lo = hi - 1;
  const double t = (omega - f[lo]) / (f[hi] - f[lo]);
  return curve.gain[lo] + t * (curve.gain[hi] - curve.gain[lo]);
}

void validate_gain_curve(const GainCurve& curve) {
  if (curve.freq.empty() || curve.freq.size() != curve.gain.size())
    throw ConfigError("gain curve must provide matching frequency and gain arrays");
  for (size_t k = 0; k < curve.freq.size(); ++k) {
    if (!std::isfinite(curve.freq[k]) || !std::isfinite(curve.gain[k]))
      throw ConfigError("gain curve must be finite");
    if (curve.gain[k] <= 0.0) throw ConfigError("gain curve must be strictly positive");
    if (k > 0 && !(curve.freq[k] > curve.freq[k - 1]))
      throw ConfigError("gain curve grid must be strictly increasing");
  }
}

void validate_trace(const WeightedTrace& wt) {
  const auto& t = wt.trace;
  if (t.grid.empty() || t.grid.size() != t.values_sn.size())
    throw ConfigError("trace must provide matching grid and value arrays");
  for (size_t k = 0; k < t.grid.size(); ++k) {
    if (!std::isfinite(t.grid[k]) || !std::isfinite(t.values_sn[k]))
      throw ConfigError("trace grid and values must be finite");
    if (k > 0 && !(t.grid[k] > t.grid[k - 1]))
      throw ConfigError("trace grid must be strictly increasing");
  }
  if (!(wt.n_avg >= 1.0) || !std::isfinite(wt.n_avg))
    throw ConfigError("n_avg must be >= 1");
}

// Free-parameter slots in a fixed canonical order. Rates live in log space,
// zeta behind atanh; the bounds Gamma > 0, gamma0 > 0, |zeta| < 1 hold for
// every internal point by construction. Angles are either one slot per trace
// or the two coefficients of an affine sweep over the input trace order.
struct Slot {
  enum Kind {
    kOmega,
    kLogGammaMeas,
    kAtanhZeta,
    kLogGamma0,
    kAngle,
    kAngleOffset,
    kAngleStep,
    kLogAmplitude,
    kLogWidth
  };
  Kind kind;
  size_t index;  // mode index or trace index
};

struct Parameterization {
  std::vector<Slot> slots;
  const std::vector<size_t>* affine_index = nullptr;  // input position per canonical trace
  double affine_offset0 = 0.0;
  double affine_step0 = 0.0;

  VectorXd pack(const EnsembleModel& model, const std::vector<double>& angles) const {
    VectorXd u(slots.size());
    for (size_t j = 0; j < slots.size(); ++j) {
      const auto& s = slots[j];
      switch (s.kind) {
        case Slot::kOmega: u[j] = model.modes[s.index].omega; break;
        case Slot::kLogGammaMeas: u[j] = std::log(model.modes[s.index].gamma_meas); break;
        case Slot::kAtanhZeta: u[j] = std::atanh(model.modes[s.index].zeta); break;
        case Slot::kLogGamma0: u[j] = std::log(model.modes[s.index].gamma0); break;
        case Slot::kAngle: u[j] = angles[s.index]; break;
        case Slot::kAngleOffset: u[j] = affine_offset0; break;
        case Slot::kAngleStep: u[j] = affine_step0; break;
        case Slot::kLogAmplitude: u[j] = std::log(model.extraneous->amplitude); break;
        case Slot::kLogWidth: u[j] = std::log(model.extraneous->width); break;
      }
    }
    return u;
  }

  void unpack(const VectorXd& u, EnsembleModel& model, std::vector<double>& angles) const {
    bool affine = false;
    double offset = affine_offset0, step = affine_step0;
    for (size_t j = 0; j < slots.size(); ++j) {
      const auto& s = slots[j];
      switch (s.kind) {
        case Slot::kOmega: model.modes[s.index].omega = u[j]; break;
        case Slot::kLogGammaMeas: model.modes[s.index].gamma_meas = std::exp(u[j]); break;
        case Slot::kAtanhZeta: model.modes[s.index].zeta = std::tanh(u[j]); break;
        case Slot::kLogGamma0: model.modes[s.index].gamma0 = std::exp(u[j]); break;
        case Slot::kAngle: angles[s.index] = u[j]; break;
        case Slot::kAngleOffset:
          offset = u[j];
          affine = true;
          break;
        case Slot::kAngleStep:
          step = u[j];
          affine = true;
          break;
        case Slot::kLogAmplitude: model.extraneous->amplitude = std::exp(u[j]); break;
        case Slot::kLogWidth: model.extraneous->width = std::exp(u[j]); break;
      }
    }
    if (affine && affine_index) {
      for (size_t c = 0; c < angles.size(); ++c)
        angles[c] = offset + step * static_cast<double>((*affine_index)[c]);
    }
  }

  // |d theta / d u| at the current point, for mapping standard errors back.
  double scale(const Slot& s, const EnsembleModel& model) const {
    switch (s.kind) {
      case Slot::kOmega:
      case Slot::kAngle:
      case Slot::kAngleOffset:
      case Slot::kAngleStep: return 1.0;
      case Slot::kLogGammaMeas: return model.modes[s.index].gamma_meas;
      case Slot::kAtanhZeta: {
        const double z = model.modes[s.index].zeta;
        return 1.0 - z * z;
      }
      case Slot::kLogGamma0: return model.modes[s.index].gamma0;
      case Slot::kLogAmplitude: return model.extraneous->amplitude;
      case Slot::kLogWidth: return model.extraneous->width;
    }
    return 1.0;
  }
};

// Evaluation context over the (canonically ordered) dataset. Traces sharing a
// grid reuse one frequency-domain solve per parameter vector.
struct Evaluator {
  const std::vector<WeightedTrace>* dataset = nullptr;
  std::vector<std::vector<double>> unique_grids;
  std::vector<size_t> grid_of_trace;
  size_t total_bins = 0;

  void build(const std::vector<WeightedTrace>& data) {
    dataset = &data;
    for (const auto& wt : data) {
      size_t g = unique_grids.size();
      for (size_t k = 0; k < unique_grids.size(); ++k) {
        if (unique_grids[k] == wt.trace.grid) {
          g = k;
          break;
        }
      }
      if (g == unique_grids.size()) unique_grids.push_back(wt.trace.grid);
      grid_of_trace.push_back(g);
      total_bins += wt.trace.grid.size();
    }
  }

  // Model PSD for every trace; throws NumericalError for unstable models.
  std::vector<std::vector<double>> model_values(const EnsembleModel& model,
                                                const std::vector<double>& angles) const {
    std::vector<OutputSpectra> spectra;
    spectra.reserve(unique_grids.size());
    for (const auto& g : unique_grids) spectra.push_back(output_spectra(model, g));

    const double eta = model.eta;
    std::vector<std::vector<double>> values(dataset->size());
    for (size_t t = 0; t < dataset->size(); ++t) {
      const OutputSpectra& sp = spectra[grid_of_trace[t]];
      const double s = std::sin(angles[t]), c = std::cos(angles[t]);
      values[t].resize(sp.grid.size());
      for (size_t k = 0; k < sp.grid.size(); ++k) {
        double spp = sp.spp[k];
        if (model.extraneous)
          spp += kShotNoise * extraneous_noise_sn(*model.extraneous, sp.grid[k]);
        const double quad =
            s * s * sp.sxx[k] + c * c * spp + 2.0 * s * c * sp.sxp[k].real();
        values[t][k] = ((1.0 - eta) * kShotNoise + eta * quad) / kShotNoise;
      }
    }
    return values;
  }

  // r_k = sqrt(n_avg) (S_model - S_data) / S_model, concatenated over traces.
  VectorXd residuals(const EnsembleModel& model, const std::vector<double>& angles) const {
    const auto values = model_values(model, angles);
    VectorXd r(total_bins);
    size_t at = 0;
    for (size_t t = 0; t < dataset->size(); ++t) {
      const auto& wt = (*dataset)[t];
      const double w = std::sqrt(wt.n_avg);
      for (size_t k = 0; k < values[t].size(); ++k) {
        const double sm = values[t][k];
        if (!(sm > 0.0) || !std::isfinite(sm))
          throw NumericalError("model PSD non-positive during fit");
        r[at++] = w * (sm - wt.trace.values_sn[k]) / sm;
      }
    }
    return r;
  }
};

}  // namespace

PsdTrace apply_response_correction(const PsdTrace& trace, const GainCurve& gain) {
  validate_gain_curve(gain);
  PsdTrace out = trace;
  for (size_t k = 0; k < out.grid.size(); ++k)
    out.values_sn[k] /= interpolate_gain(gain, out.grid[k]);
  return out;
}

std::vector<WeightedTrace> synthesize_dataset(const EnsembleModel& model,
                                              std::span<const double> angles,
                                              std::span<const double> grid, double n_avg,
                                              uint64_t seed) {
  if (!(n_avg >= 1.0) || !std::isfinite(n_avg)) throw ConfigError("n_avg must be >= 1");

  SpectrumRequest request;
  request.grid.assign(grid.begin(), grid.end());
  request.angles.assign(angles.begin(), angles.end());
  request.method = SpectrumMethod::full;
  request.include_extraneous = model.extraneous.has_value();
  std::vector<PsdTrace> traces = homodyne_psd(model, request);

  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> periodogram(n_avg, 1.0 / n_avg);

  std::vector<WeightedTrace> dataset;
  dataset.reserve(traces.size());
  for (auto& trace : traces) {
    for (double& v : trace.values_sn) v *= periodogram(rng);
    dataset.push_back({std::move(trace), n_avg});
  }
  return dataset;
}

FitResult global_fit(const FitProblem& problem) {
  if (problem.dataset.empty()) throw ConfigError("fit requires at least one trace");
  for (const auto& wt : problem.dataset) validate_trace(wt);
  problem.initial.validate();

  const size_t n_traces = problem.dataset.size();
  const size_t n_modes = problem.initial.modes.size();

  std::vector<double> angles0 = problem.initial_angles;
  if (angles0.empty()) {
    angles0.reserve(n_traces);
    for (const auto& wt : problem.dataset) angles0.push_back(wt.trace.angle);
  } else if (angles0.size() != n_traces) {
    throw ConfigError("initial_angles must match the number of traces");
  }

  // Canonical internal ordering by trace content, so the estimates do not
  // depend on the order the traces arrive in.
  std::vector<size_t> order(n_traces);
  std::iota(order.begin(), order.end(), 0);
  auto key_less = [&](size_t i, size_t j) {
    const auto& a = problem.dataset[i];
    const auto& b = problem.dataset[j];
    if (angles0[i] != angles0[j]) return angles0[i] < angles0[j];
    if (a.n_avg != b.n_avg) return a.n_avg < b.n_avg;
    if (a.trace.grid != b.trace.grid) return a.trace.grid < b.trace.grid;
    return a.trace.values_sn < b.trace.values_sn;
  };
  std::stable_sort(order.begin(), order.end(), key_less);

  std::vector<WeightedTrace> data;
  std::vector<double> angles;
  data.reserve(n_traces);
  angles.reserve(n_traces);
  for (size_t i : order) {
    WeightedTrace wt = problem.dataset[i];
    if (problem.response_correction)
      wt.trace = apply_response_correction(wt.trace, *problem.response_correction);
    data.push_back(std::move(wt));
    angles.push_back(angles0[i]);
  }

  // Assemble the free-parameter layout.
  const auto free_omega = normalize_mask(problem.free.omega, n_modes, "omega");
  const auto free_gmeas = normalize_mask(problem.free.gamma_meas, n_modes, "gamma_meas");
  const auto free_zeta = normalize_mask(problem.free.zeta, n_modes, "zeta");
  const auto free_g0 = normalize_mask(problem.free.gamma0, n_modes, "gamma0");

  Parameterization params;
  for (size_t i = 0; i < n_modes; ++i) {
    const auto& m = problem.initial.modes[i];
    if (free_omega[i]) params.slots.push_back({Slot::kOmega, i});
    if (free_gmeas[i]) {
      if (!(m.gamma_meas > 0.0))
        throw ConfigError("a free measurement rate needs a positive initial value");
      params.slots.push_back({Slot::kLogGammaMeas, i});
    }
    if (free_zeta[i]) {
      if (std::abs(m.zeta) >= 1.0)
        throw ConfigError("a free zeta needs an initial value strictly inside (-1, 1)");
      params.slots.push_back({Slot::kAtanhZeta, i});
    }
    if (free_g0[i]) {
      if (!(m.gamma0 > 0.0))
        throw ConfigError("a free gamma0 needs a positive initial value");
      params.slots.push_back({Slot::kLogGamma0, i});
    }
  }
  if (problem.free.angles) {
    if (problem.angle_model == AngleModel::per_trace) {
      for (size_t t = 0; t < n_traces; ++t) params.slots.push_back({Slot::kAngle, t});
    } else {
      // least-squares affine fit phi_k ~ offset + step k over the input order
      params.affine_index = &order;
      double k_mean = 0.0, phi_mean = 0.0;
      for (size_t k = 0; k < n_traces; ++k) {
        k_mean += static_cast<double>(k);
        phi_mean += angles0[k];
      }
      k_mean /= static_cast<double>(n_traces);
      phi_mean /= static_cast<double>(n_traces);
      double num = 0.0, den = 0.0;
      for (size_t k = 0; k < n_traces; ++k) {
        const double dk = static_cast<double>(k) - k_mean;
        num += dk * (angles0[k] - phi_mean);
        den += dk * dk;
      }
      params.affine_step0 = den > 0.0 ? num / den : 0.0;
      params.affine_offset0 = phi_mean - params.affine_step0 * k_mean;
      params.slots.push_back({Slot::kAngleOffset, 0});
      if (n_traces > 1) params.slots.push_back({Slot::kAngleStep, 0});
      // the constrained family replaces the raw initial angles
      for (size_t c = 0; c < n_traces; ++c)
        angles[c] = params.affine_offset0 +
                    params.affine_step0 * static_cast<double>(order[c]);
    }
  }
  if (problem.free.extraneous_amplitude || problem.free.extraneous_width) {
    if (!problem.initial.extraneous)
      throw ConfigError("extraneous parameters marked free but the model has none");
    if (problem.free.extraneous_amplitude) {
      if (!(problem.initial.extraneous->amplitude > 0.0))
        throw ConfigError("a free extraneous amplitude needs a positive initial value");
      params.slots.push_back({Slot::kLogAmplitude, 0});
    }
    if (problem.free.extraneous_width) params.slots.push_back({Slot::kLogWidth, 0});
  }

  Evaluator eval;
  eval.build(data);
  if (eval.total_bins < params.slots.size())
    throw ConfigError("fewer data points than free parameters");

  EnsembleModel model = problem.initial;
  VectorXd r0;
  try {
    r0 = eval.residuals(model, angles);
  } catch (const NumericalError& e) {
    throw ConfigError(std::string("initial guess is not usable: ") + e.what());
  }

  FitResult result;
  double cost = r0.squaredNorm();
  result.cost_history.push_back(cost);

  const size_t n_free = params.slots.size();
  VectorXd u = n_free > 0 ? params.pack(model, angles) : VectorXd();
  VectorXd r = r0;

  auto try_residuals = [&](const VectorXd& u_trial, VectorXd& r_out) {
    EnsembleModel m_trial = model;
    std::vector<double> a_trial = angles;
    params.unpack(u_trial, m_trial, a_trial);
    try {
      r_out = eval.residuals(m_trial, a_trial);
    } catch (const NumericalError&) {
      return false;  // unstable trial model: reject the step
    }
    return r_out.allFinite();
  };

  auto jacobian = [&](const VectorXd& u_at, const VectorXd& r_at) {
    MatrixXd jac(r_at.size(), n_free);
    VectorXd r_probe;
    for (size_t j = 0; j < n_free; ++j) {
      const double h = 1e-6 * (1.0 + std::abs(u_at[j]));
      VectorXd u_probe = u_at;
      u_probe[j] += h;
      if (try_residuals(u_probe, r_probe)) {
        jac.col(j) = (r_probe - r_at) / h;
        continue;
      }
      u_probe[j] = u_at[j] - h;
      if (try_residuals(u_probe, r_probe)) {
        jac.col(j) = (r_at - r_probe) / h;
        continue;
      }
      jac.col(j).setZero();
    }
    return jac;
  };

  int iterations = 0;
  if (n_free == 0) {
    result.converged = true;
    result.reason = "no free parameters";
  } else {
    double lambda = 1e-3;
    bool terminated = false;
    for (iterations = 1; iterations <= kMaxIterations; ++iterations) {
      const MatrixXd jac = jacobian(u, r);
      const MatrixXd h_mat = jac.transpose() * jac;
      const VectorXd g = jac.transpose() * r;
      const double diag_floor = 1e-12 * std::max(1.0, h_mat.diagonal().maxCoeff());

      bool accepted = false;
      VectorXd r_new;
      while (lambda < 1e15) {
        MatrixXd damped = h_mat;
        damped.diagonal() += lambda * h_mat.diagonal().cwiseMax(diag_floor);
        const VectorXd delta = damped.ldlt().solve(-g);
        if (!delta.allFinite()) {
          lambda *= 3.0;
          continue;
        }
        const VectorXd u_new = u + delta;
        if (try_residuals(u_new, r_new) && r_new.squaredNorm() < cost) {
          u = u_new;
          accepted = true;
          break;
        }
        lambda *= 3.0;
      }

      if (!accepted) {
        result.converged = true;
        result.reason = "no decreasing step exists within the damping range";
        terminated = true;
        break;
      }

      const double cost_new = r_new.squaredNorm();
      const double decrease = (cost - cost_new) / std::max(cost, 1e-300);
      r = r_new;
      cost = cost_new;
      result.cost_history.push_back(cost);
      lambda = std::max(lambda / 3.0, 1e-12);

      if (decrease < kRelativeCostTolerance) {
        result.converged = true;
        result.reason = "relative cost decrease below tolerance";
        terminated = true;
        break;
      }
    }
    if (!terminated) {
      iterations = kMaxIterations;
      result.converged = false;
      result.reason = "iteration limit reached";
    }
    params.unpack(u, model, angles);
  }

  result.iterations = iterations;
  result.cost = cost;
  result.estimates = model;

  // Standard errors from the quadratic model at the optimum. The residuals
  // already carry unit variance, so the covariance is (J^T J)^+.
  result.standard_errors.omega.assign(n_modes, 0.0);
  result.standard_errors.gamma_meas.assign(n_modes, 0.0);
  result.standard_errors.zeta.assign(n_modes, 0.0);
  result.standard_errors.gamma0.assign(n_modes, 0.0);
  result.standard_errors.angles.assign(n_traces, 0.0);
  if (n_free > 0) {
    const MatrixXd jac = jacobian(u, r);
    const MatrixXd cov =
        (jac.transpose() * jac).completeOrthogonalDecomposition().pseudoInverse();
    Eigen::Index j_offset = -1, j_step = -1;
    for (size_t j = 0; j < n_free; ++j) {
      const double var = cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
      const double sigma =
          (var > 0.0 ? std::sqrt(var) : 0.0) * params.scale(params.slots[j], model);
      const auto& s = params.slots[j];
      switch (s.kind) {
        case Slot::kOmega: result.standard_errors.omega[s.index] = sigma; break;
        case Slot::kLogGammaMeas: result.standard_errors.gamma_meas[s.index] = sigma; break;
        case Slot::kAtanhZeta: result.standard_errors.zeta[s.index] = sigma; break;
        case Slot::kLogGamma0: result.standard_errors.gamma0[s.index] = sigma; break;
        case Slot::kAngle: result.standard_errors.angles[s.index] = sigma; break;
        case Slot::kAngleOffset: j_offset = static_cast<Eigen::Index>(j); break;
        case Slot::kAngleStep: j_step = static_cast<Eigen::Index>(j); break;
        case Slot::kLogAmplitude: result.standard_errors.extraneous_amplitude = sigma; break;
        case Slot::kLogWidth: result.standard_errors.extraneous_width = sigma; break;
      }
    }
    if (j_offset >= 0) {
      // phi_k = offset + step k: propagate the 2x2 covariance to each trace
      const double v00 = cov(j_offset, j_offset);
      const double v11 = j_step >= 0 ? cov(j_step, j_step) : 0.0;
      const double v01 = j_step >= 0 ? cov(j_offset, j_step) : 0.0;
      for (size_t c = 0; c < n_traces; ++c) {
        const double k = static_cast<double>(order[c]);
        const double var = v00 + k * k * v11 + 2.0 * k * v01;
        result.standard_errors.angles[c] = var > 0.0 ? std::sqrt(var) : 0.0;
      }
    }
  }

  // Per-trace residual statistics, then everything back to input order.
  std::vector<double> per_trace(n_traces, 0.0);
  {
    size_t at = 0;
    for (size_t t = 0; t < n_traces; ++t) {
      const size_t bins = data[t].trace.grid.size();
      double sum = 0.0;
      for (size_t k = 0; k < bins; ++k) sum += r[at + k] * r[at + k];
      per_trace[t] = sum / static_cast<double>(bins);
      at += bins;
    }
  }

  result.angles.assign(n_traces, 0.0);
  result.per_trace_mean_sq_residual.assign(n_traces, 0.0);
  std::vector<double> angle_errors(n_traces, 0.0);
  for (size_t t = 0; t < n_traces; ++t) {
    result.angles[order[t]] = angles[t];
    result.per_trace_mean_sq_residual[order[t]] = per_trace[t];
    angle_errors[order[t]] = result.standard_errors.angles[t];
  }
  result.standard_errors.angles = std::move(angle_errors);

  return result;
}

}  // namespace spinsim
