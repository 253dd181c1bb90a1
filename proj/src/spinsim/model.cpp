#include "spinsim/model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "spinsim/errors.hpp"

namespace spinsim {

namespace {

bool finite(double x) { return std::isfinite(x); }

}  // namespace

void ModeParams::validate() const {
  if (!finite(omega) || !finite(gamma0) || !finite(gamma_meas) || !finite(zeta) || !finite(n_th))
    throw ConfigError("mode parameters must be finite");
  if (gamma0 < 0.0) throw ConfigError("gamma0 must be >= 0");
  if (gamma_meas < 0.0) throw ConfigError("gamma_meas must be >= 0");
  if (n_th < 0.0) throw ConfigError("n_th must be >= 0");
  if (std::abs(zeta) > 1.0) throw ConfigError("|zeta| must be <= 1");
}

DerivedRates derived_rates(const ModeParams& mode) {
  mode.validate();
  DerivedRates r;
  r.gamma_th = (2.0 * mode.n_th + 1.0) * mode.gamma0;
  r.gamma_dba = 2.0 * mode.zeta * mode.gamma_meas;
  r.gamma_qba = mode.gamma_meas * (1.0 + mode.zeta * mode.zeta);
  r.c_q = r.gamma_th == 0.0 ? std::numeric_limits<double>::infinity()
                            : mode.gamma_meas / r.gamma_th;
  r.gamma_total = mode.gamma0 + r.gamma_dba;
  r.gamma_dec = r.gamma_th + r.gamma_qba;
  return r;
}

double clebsch_coefficient(int f, int m) {
  if (f < 1) throw ConfigError("clebsch_coefficient: f must be >= 1");
  if (m < -f || m > f - 1) {
    std::ostringstream os;
    os << "clebsch_coefficient: m = " << m << " outside [" << -f << ", " << f - 1 << "]";
    throw ConfigError(os.str());
  }
  const double fd = f, md = m;
  return std::sqrt(fd * (fd + 1.0) - md * (md + 1.0));
}

void ExtraneousNoiseSpec::validate() const {
  if (!finite(amplitude) || !finite(width) || !finite(center))
    throw ConfigError("extraneous noise parameters must be finite");
  if (amplitude < 0.0) throw ConfigError("extraneous amplitude must be >= 0");
  if (width <= 0.0) throw ConfigError("extraneous width must be > 0");
}

void EnsembleModel::validate() const {
  if (modes.empty()) throw ConfigError("model must contain at least one mode");
  for (const auto& m : modes) m.validate();
  if (!finite(eta) || eta < 0.0 || eta > 1.0) throw ConfigError("eta must lie in [0, 1]");
  if (extraneous) extraneous->validate();
}

double EnsembleModel::total_gamma_meas() const {
  double sum = 0.0;
  for (const auto& m : modes) sum += m.gamma_meas;
  return sum;
}

double EnsembleModel::total_gamma_th() const {
  const double total = total_gamma_meas();
  if (total == 0.0) return 0.0;
  double sum = 0.0;
  for (const auto& m : modes) sum += derived_rates(m).gamma_th * m.gamma_meas;
  return sum / total;
}

double EnsembleModel::total_cooperativity() const {
  const double gth = total_gamma_th();
  if (gth == 0.0) return std::numeric_limits<double>::infinity();
  return total_gamma_meas() / gth;
}

double EnsembleModel::weighted_omega() const {
  const double total = total_gamma_meas();
  if (total == 0.0) return modes.front().omega;
  double sum = 0.0;
  for (const auto& m : modes) sum += m.omega * m.gamma_meas;
  return sum / total;
}

void CesiumLevelSpec::validate() const {
  if (f_number < 1) throw ConfigError("f_number must be >= 1");
  const size_t expected = static_cast<size_t>(2 * f_number + 1);
  if (populations.size() != expected)
    throw ConfigError("populations must have 2F+1 entries");
  for (double n : populations) {
    if (!finite(n) || n < 0.0) throw ConfigError("populations must be non-negative");
  }
  if (!finite(larmor) || !finite(split_qz) || !finite(split_ts) || !finite(rate_scale) ||
      !finite(zeta_common) || !finite(gamma0))
    throw ConfigError("level spec parameters must be finite");
  if (rate_scale < 0.0) throw ConfigError("rate_scale must be >= 0");
  if (gamma0 < 0.0) throw ConfigError("gamma0 must be >= 0");
}

EnsembleModel build_cesium_ensemble(const CesiumLevelSpec& spec) {
  spec.validate();
  const int f = spec.f_number;
  // zeta_m = zeta (2m+1)/7 at F = 4; the denominator generalizes as 2F-1 so
  // that the top transition carries the common zeta.
  const double zeta_denominator = 2.0 * f - 1.0;

  EnsembleModel model;
  for (int m = -f; m <= f - 1; ++m) {
    const double n_lower = spec.populations[static_cast<size_t>(m + f)];
    const double n_upper = spec.populations[static_cast<size_t>(m + f + 1)];
    const double dn = n_upper - n_lower;
    if (dn <= 0.0) {
      if (dn == 0.0 && n_lower == 0.0) continue;  // empty levels: no mode
      std::ostringstream os;
      os << "population difference non-positive at m = " << m
         << " (dN = " << dn << "): linearized mode undefined";
      throw ConfigError(os.str());
    }
    const double cm = clebsch_coefficient(f, m);
    ModeParams mode;
    const auto it = spec.omega_overrides.find(m);
    mode.omega = it != spec.omega_overrides.end()
                     ? it->second
                     : spec.larmor + (spec.split_qz + spec.split_ts) * (2.0 * m + 1.0);
    mode.gamma0 = spec.gamma0;
    mode.gamma_meas = spec.rate_scale * cm * cm * dn;
    mode.zeta = spec.zeta_common * (2.0 * m + 1.0) / zeta_denominator;
    mode.n_th = n_lower / dn;
    model.modes.push_back(mode);
  }
  if (model.modes.empty())
    throw ConfigError("no populated transitions: the ensemble has no modes");
  model.validate();
  return model;
}

}  // namespace spinsim
