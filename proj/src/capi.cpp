#include "spinsim.h"

#include <cstring>
#include <new>
#include <string>

#include "spinsim/errors.hpp"
#include "spinsim/fit.hpp"
#include "spinsim/json_io.hpp"
#include "spinsim/model.hpp"
#include "spinsim/optics.hpp"
#include "spinsim/spectrum.hpp"
#include "spinsim/units.hpp"

struct spinsim_model {
  spinsim::EnsembleModel model;
};

namespace {

thread_local std::string g_last_error;

spinsim_status fail(spinsim_status status, const char* what) {
  g_last_error = what;
  return status;
}

// Runs the body, translating exceptions into status codes.
template <typename Fn>
spinsim_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const spinsim::ConfigError& e) {
    return fail(SPINSIM_ERR_CONFIG, e.what());
  } catch (const spinsim::NumericalError& e) {
    return fail(SPINSIM_ERR_NUMERIC, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(SPINSIM_ERR_CONFIG, e.what());
  } catch (const std::exception& e) {
    return fail(SPINSIM_ERR_NUMERIC, e.what());
  }
}

char* copy_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<double> grid_rad(const double* freq_hz, size_t n) {
  if (freq_hz == nullptr || n == 0)
    throw spinsim::ConfigError("frequency array must be non-null and non-empty");
  std::vector<double> grid(n);
  for (size_t k = 0; k < n; ++k) grid[k] = spinsim::hz_to_rad(freq_hz[k]);
  return grid;
}

spinsim::SpectrumMethod to_method(spinsim_method method) {
  switch (method) {
    case SPINSIM_METHOD_FULL: return spinsim::SpectrumMethod::full;
    case SPINSIM_METHOD_RWA: return spinsim::SpectrumMethod::rwa;
    case SPINSIM_METHOD_ANALYTIC: return spinsim::SpectrumMethod::analytic_single_mode;
  }
  throw spinsim::ConfigError("unknown spectrum method");
}

spinsim_rates to_c_rates(const spinsim::DerivedRates& r) {
  spinsim_rates out;
  out.gamma_th_hz = spinsim::rad_to_hz(r.gamma_th);
  out.gamma_dba_hz = spinsim::rad_to_hz(r.gamma_dba);
  out.gamma_qba_hz = spinsim::rad_to_hz(r.gamma_qba);
  out.c_q = r.c_q;
  out.gamma_total_hz = spinsim::rad_to_hz(r.gamma_total);
  out.gamma_dec_hz = spinsim::rad_to_hz(r.gamma_dec);
  return out;
}

}  // namespace

extern "C" {

const char* spinsim_last_error(void) { return g_last_error.c_str(); }

const char* spinsim_version(void) { return "0.1.0"; }

void spinsim_string_free(char* s) { delete[] s; }

spinsim_status spinsim_model_from_json(const char* json, spinsim_model** out) {
  return guarded([&] {
    if (json == nullptr || out == nullptr)
      throw spinsim::ConfigError("null argument");
    auto parsed = nlohmann::json::parse(json);
    auto model = spinsim::json_io::model_from_json(parsed);
    *out = new spinsim_model{std::move(model)};
    return SPINSIM_OK;
  });
}

spinsim_status spinsim_model_to_json(const spinsim_model* model, char** json_out) {
  return guarded([&] {
    if (model == nullptr || json_out == nullptr)
      throw spinsim::ConfigError("null argument");
    *json_out = copy_string(spinsim::json_io::model_to_json(model->model).dump(2));
    return SPINSIM_OK;
  });
}

void spinsim_model_free(spinsim_model* model) { delete model; }

size_t spinsim_model_mode_count(const spinsim_model* model) {
  return model ? model->model.modes.size() : 0;
}

spinsim_status spinsim_model_from_ensemble_json(const char* json, spinsim_model** out) {
  return guarded([&] {
    if (json == nullptr || out == nullptr)
      throw spinsim::ConfigError("null argument");
    auto parsed = nlohmann::json::parse(json);
    auto model = spinsim::json_io::ensemble_config_to_model(parsed);
    *out = new spinsim_model{std::move(model)};
    return SPINSIM_OK;
  });
}

spinsim_status spinsim_derived_rates(double omega_hz, double gamma0_hz, double gamma_meas_hz,
                                     double zeta, double n_th, spinsim_rates* out) {
  return guarded([&] {
    if (out == nullptr) throw spinsim::ConfigError("null output");
    spinsim::ModeParams mode;
    mode.omega = spinsim::hz_to_rad(omega_hz);
    mode.gamma0 = spinsim::hz_to_rad(gamma0_hz);
    mode.gamma_meas = spinsim::hz_to_rad(gamma_meas_hz);
    mode.zeta = zeta;
    mode.n_th = n_th;
    *out = to_c_rates(spinsim::derived_rates(mode));
    return SPINSIM_OK;
  });
}

spinsim_status spinsim_model_mode_rates(const spinsim_model* model, size_t mode_index,
                                        spinsim_rates* out) {
  return guarded([&] {
    if (model == nullptr || out == nullptr) throw spinsim::ConfigError("null argument");
    if (mode_index >= model->model.modes.size())
      throw spinsim::ConfigError("mode index out of range");
    *out = to_c_rates(spinsim::derived_rates(model->model.modes[mode_index]));
    return SPINSIM_OK;
  });
}

spinsim_status spinsim_clebsch(int f, int m, double* out) {
  return guarded([&] {
    if (out == nullptr) throw spinsim::ConfigError("null output");
    *out = spinsim::clebsch_coefficient(f, m);
    return SPINSIM_OK;
  });
}

spinsim_status spinsim_psd(const spinsim_model* model, const double* freq_hz, size_t n,
                           double phi_rad, spinsim_method method, int include_extraneous,
                           double* psd_sn_out) {
  return guarded([&] {
    if (model == nullptr || psd_sn_out == nullptr)
      throw spinsim::ConfigError("null argument");
    spinsim::SpectrumRequest request;
    request.grid = grid_rad(freq_hz, n);
    request.angles = {phi_rad};
    request.method = to_method(method);
    request.include_extraneous = include_extraneous != 0;
    const auto traces = spinsim::homodyne_psd(model->model, request);
    std::memcpy(psd_sn_out, traces.front().values_sn.data(), n * sizeof(double));
    return SPINSIM_OK;
  });
}

spinsim_status spinsim_psd_min(const spinsim_model* model, const double* freq_hz, size_t n,
                               int include_extraneous, double* psd_sn_out,
                               double* phi_min_rad_out) {
  return guarded([&] {
    if (model == nullptr || psd_sn_out == nullptr)
      throw spinsim::ConfigError("null argument");
    std::vector<double> phi_min;
    const auto trace = spinsim::engine_min_envelope(
        model->model, grid_rad(freq_hz, n), include_extraneous != 0,
        phi_min_rad_out ? &phi_min : nullptr);
    std::memcpy(psd_sn_out, trace.values_sn.data(), n * sizeof(double));
    if (phi_min_rad_out) std::memcpy(phi_min_rad_out, phi_min.data(), n * sizeof(double));
    return SPINSIM_OK;
  });
}

spinsim_status spinsim_envelope(const spinsim_model* model, const double* freq_hz, size_t n,
                                double* psd_sn_out) {
  return guarded([&] {
    if (model == nullptr || psd_sn_out == nullptr)
      throw spinsim::ConfigError("null argument");
    const auto trace = spinsim::optimum_envelope(model->model, grid_rad(freq_hz, n));
    std::memcpy(psd_sn_out, trace.values_sn.data(), n * sizeof(double));
    return SPINSIM_OK;
  });
}

spinsim_status spinsim_rwa_phi_min(const spinsim_model* model, const double* freq_hz, size_t n,
                                   double* phi_rad_out) {
  return guarded([&] {
    if (model == nullptr || phi_rad_out == nullptr)
      throw spinsim::ConfigError("null argument");
    if (model->model.modes.size() != 1)
      throw spinsim::ConfigError("rwa operations require a single-mode model");
    const auto phi =
        spinsim::rwa_phi_min(model->model.modes.front(), grid_rad(freq_hz, n));
    std::memcpy(phi_rad_out, phi.data(), n * sizeof(double));
    return SPINSIM_OK;
  });
}

spinsim_status spinsim_rwa_min_approx(const spinsim_model* model, double* out) {
  return guarded([&] {
    if (model == nullptr || out == nullptr) throw spinsim::ConfigError("null argument");
    if (model->model.modes.size() != 1)
      throw spinsim::ConfigError("rwa operations require a single-mode model");
    *out = spinsim::rwa_min_approx(model->model.modes.front());
    return SPINSIM_OK;
  });
}

spinsim_status spinsim_bip(double eta, double s_ext_sn, double zeta, double c_q, double* out) {
  return guarded([&] {
    if (out == nullptr) throw spinsim::ConfigError("null output");
    *out = spinsim::backaction_imprecision_product(eta, s_ext_sn, zeta, c_q);
    return SPINSIM_OK;
  });
}

spinsim_status spinsim_synthesize(const char* config_json, uint64_t seed,
                                  char** dataset_json_out) {
  return guarded([&] {
    if (config_json == nullptr || dataset_json_out == nullptr)
      throw spinsim::ConfigError("null argument");
    const auto cfg =
        spinsim::json_io::synth_config_from_json(nlohmann::json::parse(config_json));
    const auto dataset =
        spinsim::synthesize_dataset(cfg.model, cfg.angles, cfg.grid, cfg.n_avg, seed);
    *dataset_json_out = copy_string(spinsim::json_io::dataset_to_json(dataset).dump(2));
    return SPINSIM_OK;
  });
}

spinsim_status spinsim_fit(const char* problem_json, char** result_json_out) {
  return guarded([&] {
    if (problem_json == nullptr || result_json_out == nullptr)
      throw spinsim::ConfigError("null argument");
    const auto problem =
        spinsim::json_io::fit_problem_from_json(nlohmann::json::parse(problem_json));
    const auto result = spinsim::global_fit(problem);
    *result_json_out = copy_string(spinsim::json_io::fit_result_to_json(result).dump(2));
    if (!result.converged) return fail(SPINSIM_ERR_NO_CONVERGENCE, result.reason.c_str());
    return SPINSIM_OK;
  });
}

spinsim_status spinsim_tophat_design(const char* request_json, char** result_json_out) {
  return guarded([&] {
    if (request_json == nullptr || result_json_out == nullptr)
      throw spinsim::ConfigError("null argument");
    const auto req =
        spinsim::json_io::tophat_request_from_json(nlohmann::json::parse(request_json));
    const double f2 = req.f2 ? *req.f2
                             : spinsim::collimating_negative_lens(req.w_in, req.fan_angle,
                                                                  req.f1);
    const auto design = spinsim::solve_equivalent_setup(req.w_in, req.fan_angle, req.f1, f2,
                                                        req.focal1, req.focal2, req.inversion);
    *result_json_out = copy_string(spinsim::json_io::tophat_design_to_json(design).dump(2));
    return SPINSIM_OK;
  });
}

}  // extern "C"
