/*
 * spinsim - frequency-domain simulator and fitting toolkit for continuous
 * quantum measurements of multimode spin oscillators by a traveling light
 * field, plus the first-order optics design of collimated tophat probes.
 *
 * C API over the C++ core. Handles are opaque; every fallible call returns a
 * spinsim_status and leaves a human-readable message in spinsim_last_error().
 * Frequencies cross this boundary as ordinary Hz; PSDs are in shot-noise
 * units (vacuum = 1); angles are radians.
 */
#ifndef SPINSIM_H
#define SPINSIM_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum spinsim_status {
  SPINSIM_OK = 0,
  SPINSIM_ERR_CONFIG = 2,         /* invalid arguments, malformed JSON, bad model */
  SPINSIM_ERR_NUMERIC = 3,        /* unstable model, singular solve, infeasible design */
  SPINSIM_ERR_NO_CONVERGENCE = 4  /* fit hit the iteration limit; result still produced */
} spinsim_status;

typedef enum spinsim_method {
  SPINSIM_METHOD_FULL = 0,          /* multimode frequency-domain Langevin solve */
  SPINSIM_METHOD_RWA = 1,           /* single-mode rotating-wave closed form */
  SPINSIM_METHOD_ANALYTIC = 2       /* single-mode closed form, zeta = 0 */
} spinsim_method;

typedef struct spinsim_model spinsim_model;

/* Message for the last failing call on this thread. */
const char* spinsim_last_error(void);

const char* spinsim_version(void);

/* Frees strings returned through char** out-parameters. */
void spinsim_string_free(char* s);

/*
 * Model schema:
 *   { "modes": [ { "omega_hz", "gamma0_hz", "gamma_meas_hz", "zeta", "n_th" } ],
 *     "eta": 0.91,
 *     "extraneous": { "amplitude_sn", "width_hz", "center_hz" } | null }
 */
spinsim_status spinsim_model_from_json(const char* json, spinsim_model** out);
spinsim_status spinsim_model_to_json(const spinsim_model* model, char** json_out);
void spinsim_model_free(spinsim_model* model);
size_t spinsim_model_mode_count(const spinsim_model* model);

/*
 * Builds the multimode model from level populations:
 *   { "cesium": { "f_number", "populations", "larmor_hz", "split_qz_hz",
 *                 "split_ts_hz", "rate_scale_hz", "zeta_common", "gamma0_hz",
 *                 "omega_override_hz"? },
 *     "eta": 0.91, "extraneous": {...} | null }
 */
spinsim_status spinsim_model_from_ensemble_json(const char* json, spinsim_model** out);

typedef struct spinsim_rates {
  double gamma_th_hz;
  double gamma_dba_hz;
  double gamma_qba_hz;
  double c_q;            /* +inf when gamma_th == 0 */
  double gamma_total_hz;
  double gamma_dec_hz;
} spinsim_rates;

spinsim_status spinsim_derived_rates(double omega_hz, double gamma0_hz, double gamma_meas_hz,
                                     double zeta, double n_th, spinsim_rates* out);
spinsim_status spinsim_model_mode_rates(const spinsim_model* model, size_t mode_index,
                                        spinsim_rates* out);

/* sqrt(f(f+1) - m(m+1)) for the transition m -> m+1, -f <= m <= f-1. */
spinsim_status spinsim_clebsch(int f, int m, double* out);

/*
 * Homodyne PSD at quadrature angle phi on a strictly increasing grid of n
 * frequencies; psd_sn_out must hold n doubles.
 */
spinsim_status spinsim_psd(const spinsim_model* model, const double* freq_hz, size_t n,
                           double phi_rad, spinsim_method method, int include_extraneous,
                           double* psd_sn_out);

/*
 * Exact per-frequency minimum of the PSD over the detection angle.
 * phi_min_rad_out may be NULL.
 */
spinsim_status spinsim_psd_min(const spinsim_model* model, const double* freq_hz, size_t n,
                               int include_extraneous, double* psd_sn_out,
                               double* phi_min_rad_out);

/*
 * Closed-form optimum-quadrature envelope from the effective single-oscillator
 * totals of the model (total measurement rate, weighted thermal decoherence).
 */
spinsim_status spinsim_envelope(const spinsim_model* model, const double* freq_hz, size_t n,
                                double* psd_sn_out);

/* Frequency-dependent maximum-squeezing angle of a single-mode model. */
spinsim_status spinsim_rwa_phi_min(const spinsim_model* model, const double* freq_hz, size_t n,
                                   double* phi_rad_out);

/* Approximate optimum-quadrature minimum of a single-mode model, SN units. */
spinsim_status spinsim_rwa_min_approx(const spinsim_model* model, double* out);

/*
 * Backaction-imprecision product in units of hbar/2:
 *   sqrt((1/eta) (1 + s_ext_sn) (1 + zeta^2 + 1/c_q))
 */
spinsim_status spinsim_bip(double eta, double s_ext_sn, double zeta, double c_q, double* out);

/*
 * Synthetic multi-quadrature dataset with n_avg-average periodogram noise:
 *   config: { "model": {...}, "grid": [Hz...] | {start_hz, stop_hz, points},
 *             "angles": [rad...] | {count}, "n_avg": 1000 }
 * Result: { "traces": [ { "freq_hz", "psd_sn", "angle_rad", "n_avg" } ] },
 * byte-reproducible for a given seed.
 */
spinsim_status spinsim_synthesize(const char* config_json, uint64_t seed, char** dataset_json_out);

/*
 * Global weighted least-squares fit of multi-quadrature spectra:
 *   problem: { "initial": model, "traces": [...], "free": {...},
 *              "initial_angles_rad"?, "response_correction"? }
 * Writes the result JSON even when returning SPINSIM_ERR_NO_CONVERGENCE.
 */
spinsim_status spinsim_fit(const char* problem_json, char** result_json_out);

/*
 * Collimated-tophat first-order design:
 *   request: { "w_in_mm", "fan_angle_rad", "f1_mm", "f2_mm"?, "F1_mm", "F2_mm",
 *              "invert": false | true | "auto" }
 * f2 defaults to the collimating negative-lens formula. The result carries the
 * solved separations, the matching residual, and the traced marginal ray.
 */
spinsim_status spinsim_tophat_design(const char* request_json, char** result_json_out);

#ifdef __cplusplus
}
#endif

#endif /* SPINSIM_H */
