#ifndef OPOSIM_H
#define OPOSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OposimCombination {
  OPOSIM_COMBINATION_P_MINUS = 0,
  OPOSIM_COMBINATION_Q_MINUS = 1,
  OPOSIM_COMBINATION_P_PLUS = 2,
  OPOSIM_COMBINATION_Q_PLUS = 3,
  OPOSIM_COMBINATION_P0 = 4,
  OPOSIM_COMBINATION_Q0 = 5,
} OposimCombination;

typedef enum OposimStatus {
  OPOSIM_STATUS_OK = 0,
  OPOSIM_STATUS_NULL_POINTER = 1,
  OPOSIM_STATUS_INVALID_ARGUMENT = 2,
  OPOSIM_STATUS_NO_OSCILLATION = 3,
  OPOSIM_STATUS_NUMERICAL = 4,
  OPOSIM_STATUS_BUFFER_TOO_SMALL = 5,
  OPOSIM_STATUS_PANIC = 6,
} OposimStatus;

/**
 * Linear model: cavity parameters and pump noise.
 */
typedef struct OposimModel OposimModel;

/**
 * Shot-noise-normalized stochastic spectrum estimate.
 */
typedef struct OposimSpectrum OposimSpectrum;

/**
 * Laboratory cavity parameters, per roundtrip.
 */
typedef struct OposimPhysicalParams {
  double gamma;
  double gamma0;
  double gamma_total;
  double gamma_total0;
  double delta;
  double delta0;
  double tau;
  double chi;
} OposimPhysicalParams;

typedef struct OposimPumpNoise {
  double s_p0;
  double s_q0;
} OposimPumpNoise;

/**
 * Output spectra at one analysis frequency, shot noise = 1.
 */
typedef struct OposimSpectra {
  double sigma;
  double omega;
  double s_p_minus;
  double s_q_minus;
  double s_p_plus;
  double s_q_plus;
  double s_p0_ref;
  double s_q0_ref;
  double duan_sum;
} OposimSpectra;

/**
 * Stochastic ensemble settings; `scheme` 0 is Euler-Maruyama, 1 the
 * semi-implicit midpoint rule.
 */
typedef struct OposimEnsembleConfig {
  double dt;
  double duration;
  double transient;
  size_t n_traj;
  uint64_t seed;
  double g;
  double gamma_r;
  double sigma;
  size_t sample_every;
  int scheme;
} OposimEnsembleConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL
 * terminated, truncated to `cap`). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes.
 */
size_t oposim_last_error_message(char *buf, size_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *oposim_version(void);

/**
 * # Safety
 * `params` and `pump` must be null or point to valid structs; `out` must be
 * a valid pointer.
 */
enum OposimStatus oposim_model_new(const struct OposimPhysicalParams *params,
                                   const struct OposimPumpNoise *pump,
                                   struct OposimModel **out);

/**
 * # Safety
 * `model` must be null or a pointer from [`oposim_model_new`] not yet freed.
 */
void oposim_model_free(struct OposimModel *model);

/**
 * Linearized spectra at pump parameter `sigma` and frequency `omega`
 * (units of the cavity damping rate).
 *
 * # Safety
 * `model` must be a live model and `out` a valid pointer.
 */
enum OposimStatus oposim_model_spectra(const struct OposimModel *model,
                                       double sigma,
                                       double omega,
                                       struct OposimSpectra *out);

/**
 * Scans `n` strictly increasing sigma values, writing one row per value.
 * `crossing` receives the sigma where `S_q+` crosses 1, or NaN.
 *
 * # Safety
 * `sigmas` must hold `n` values and `rows` room for `n` rows; `crossing`
 * may be null.
 */
enum OposimStatus oposim_model_scan(const struct OposimModel *model,
                                    const double *sigmas,
                                    size_t n,
                                    double omega,
                                    double efficiency,
                                    struct OposimSpectra *rows,
                                    double *crossing);

/**
 * Closed-form `S_p-` at a lossless resonant operating point.
 */
double oposim_analytic_sp_minus(double omega);

/**
 * Closed-form `S_q+` at a lossless resonant operating point.
 */
double oposim_analytic_sq_plus(double omega, double sigma, double gamma_r);

/**
 * Inseparability sum; `entangled` (may be null) is set to 1 below the bound.
 *
 * # Safety
 * `entangled` must be null or valid.
 */
double oposim_duan_sum(double s_p_minus, double s_q_plus, int *entangled);

/**
 * Amplitude noise detected after reflection off the analysis cavity at
 * `detuning` (units of the bandwidth).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum OposimStatus oposim_cavity_detected_noise(double bandwidth_hz,
                                               double analysis_frequency_hz,
                                               double mirror_loss,
                                               double s_p,
                                               double s_q,
                                               double correlation,
                                               double detuning,
                                               double *out);

/**
 * Runs a stochastic ensemble and estimates the normalized spectrum of one
 * combination up to `max_frequency` (`<= 0` keeps every bin).
 *
 * # Safety
 * `cfg` must be valid and `out` a valid pointer.
 */
enum OposimStatus oposim_stochastic_spectrum(const struct OposimEnsembleConfig *cfg,
                                             int first_order,
                                             enum OposimCombination combination,
                                             double max_frequency,
                                             struct OposimSpectrum **out);

/**
 * Number of frequency bins in `spectrum` (0 for null).
 *
 * # Safety
 * `spectrum` must be null or live.
 */
size_t oposim_spectrum_len(const struct OposimSpectrum *spectrum);

/**
 * Number of trajectories that contributed to `spectrum`.
 *
 * # Safety
 * `spectrum` must be null or live.
 */
size_t oposim_spectrum_n_traj(const struct OposimSpectrum *spectrum);

/**
 * Copies frequencies, values and standard errors into arrays of capacity
 * `cap`. Any of the output arrays may be null.
 *
 * # Safety
 * Non-null arrays must have room for `cap` values.
 */
enum OposimStatus oposim_spectrum_copy(const struct OposimSpectrum *spectrum,
                                       double *frequencies,
                                       double *values,
                                       double *stderr,
                                       size_t cap);

/**
 * # Safety
 * `spectrum` must be null or a pointer from [`oposim_stochastic_spectrum`]
 * not yet freed.
 */
void oposim_spectrum_free(struct OposimSpectrum *spectrum);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPOSIM_H */
