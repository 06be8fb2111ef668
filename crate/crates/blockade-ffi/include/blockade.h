/* C interface to the blockade simulator. */

#ifndef BLOCKADE_H
#define BLOCKADE_H

/* Generated from the blockade-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call. Zero is success; anything else is a failure whose
 * message is available through `blockade_last_error`.
 */
typedef enum BlockadeStatus {
  BLOCKADE_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  BLOCKADE_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  BLOCKADE_STATUS_INVALID_UTF8 = 2,
  /**
   * A parameter or option was rejected.
   */
  BLOCKADE_STATUS_INVALID_INPUT = 3,
  /**
   * An input file was malformed.
   */
  BLOCKADE_STATUS_PARSE_FAILED = 4,
  /**
   * Integration failed: non-finite state, exhausted step budget, or a
   * singular quasi-steady solve.
   */
  BLOCKADE_STATUS_NUMERICS_FAILED = 5,
  /**
   * The trace never crosses the requested transition thresholds.
   */
  BLOCKADE_STATUS_NO_TRANSITION = 6,
  /**
   * A fit was impossible on the given data.
   */
  BLOCKADE_STATUS_FIT_FAILED = 7,
  /**
   * File input or output failed.
   */
  BLOCKADE_STATUS_IO_FAILED = 8,
  /**
   * An internal invariant broke; please report.
   */
  BLOCKADE_STATUS_INTERNAL = 9,
} BlockadeStatus;

/**
 * Opaque photon-count record with calibration metadata.
 */
typedef struct BlockadeCounts BlockadeCounts;

/**
 * Opaque parameter set in the same key space as the CLI parameter files.
 */
typedef struct BlockadeParams BlockadeParams;

/**
 * Opaque trajectory on a uniform output grid.
 */
typedef struct BlockadeTrajectory BlockadeTrajectory;

/**
 * Transition timing of a transmission trace, all in microseconds.
 */
typedef struct BlockadeTransition {
  /**
   * Crossing of 10% of the reference transmission.
   */
  double t10_us;
  /**
   * Crossing of 50%.
   */
  double t50_us;
  /**
   * Crossing of 90%.
   */
  double t90_us;
  /**
   * `t90_us - t10_us`.
   */
  double width_us;
} BlockadeTransition;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string. Never freed.
 */
const char *blockade_version(void);

/**
 * Message of the most recent failure on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *blockade_last_error(void);

/**
 * Fresh parameter set at the built-in experimental defaults.
 */
struct BlockadeParams *blockade_params_default(void);

/**
 * Releases a parameter handle.
 *
 * # Safety
 * `params` must be NULL or a handle from `blockade_params_default` that
 * has not been freed.
 */
void blockade_params_free(struct BlockadeParams *params);

/**
 * Sets a numeric parameter. Keys: `kappa_mhz`, `gamma_mhz`,
 * `Gamma_over_gamma`, `g_mhz`, `delta_A_mhz`, `delta_C_mhz`,
 * `eta_over_kappa`, `n_atoms`, `waist_um`, `wavelength_nm`.
 *
 * # Safety
 * `params` must be a live handle; `key` must be NUL-terminated.
 */
enum BlockadeStatus blockade_params_set(struct BlockadeParams *params,
                                        const char *key,
                                        double value);

/**
 * Sets a text parameter; currently `g_eff_mode` with values `averaged`
 * or `peak`.
 *
 * # Safety
 * `params` must be a live handle; `key` and `value` must be
 * NUL-terminated.
 */
enum BlockadeStatus blockade_params_set_text(struct BlockadeParams *params,
                                             const char *key,
                                             const char *value);

/**
 * Reads a numeric parameter back into `out`.
 *
 * # Safety
 * `params` must be a live handle; `key` NUL-terminated; `out` writable.
 */
enum BlockadeStatus blockade_params_get(const struct BlockadeParams *params,
                                        const char *key,
                                        double *out);

/**
 * Collective dispersive shift per effective atom, rad/us, signed.
 *
 * # Safety
 * `params` must be a live handle; `out` writable.
 */
enum BlockadeStatus blockade_dispersive_shift(const struct BlockadeParams *params, double *out);

/**
 * On-resonance Lorentzian transmission when `n_eff` atoms shift the
 * cavity, as a fraction of the empty-cavity level.
 *
 * # Safety
 * `params` must be a live handle; `out` writable.
 */
enum BlockadeStatus blockade_transmission(const struct BlockadeParams *params,
                                          double n_eff,
                                          double *out);

/**
 * Empty-cavity photon number at the configured drive.
 *
 * # Safety
 * `params` must be a live handle; `out` writable.
 */
enum BlockadeStatus blockade_reference_photons(const struct BlockadeParams *params, double *out);

/**
 * Integrates the slow-manifold equations from vacuum with all atoms in
 * the ground state and writes a new trajectory handle into `out`.
 *
 * # Safety
 * `params` must be a live handle; `out` must be writable. The returned
 * handle must be released with `blockade_trajectory_free`.
 */
enum BlockadeStatus blockade_simulate_slow(const struct BlockadeParams *params,
                                           double t_end_us,
                                           double dt_out_us,
                                           struct BlockadeTrajectory **out);

/**
 * Integrates the full field and atom dynamics (stiff; spans beyond ~1e5
 * cavity lifetimes are better served by `blockade_simulate_slow`).
 *
 * # Safety
 * `params` must be a live handle; `out` must be writable. The returned
 * handle must be released with `blockade_trajectory_free`.
 */
enum BlockadeStatus blockade_simulate_full(const struct BlockadeParams *params,
                                           double t_end_us,
                                           double dt_out_us,
                                           struct BlockadeTrajectory **out);

/**
 * Runs one stochastic realization with discrete atom escape and Poisson
 * photon counting. `t_end_us` and `dt_out_us` must be whole multiples of
 * `dt_jump_us`, which must be a whole multiple of `bin_time_us`. The same
 * seed always reproduces the same outputs.
 *
 * # Safety
 * `params` must be a live handle; `out_trajectory` and `out_counts` must
 * be writable. Release the results with `blockade_trajectory_free` and
 * `blockade_counts_free`.
 */
enum BlockadeStatus blockade_simulate_stochastic(const struct BlockadeParams *params,
                                                 uint64_t seed,
                                                 double dt_jump_us,
                                                 double bin_time_us,
                                                 double efficiency,
                                                 bool decrement_excited,
                                                 double t_end_us,
                                                 double dt_out_us,
                                                 struct BlockadeTrajectory **out_trajectory,
                                                 struct BlockadeCounts **out_counts);

/**
 * Number of samples in a trajectory; 0 for NULL.
 *
 * # Safety
 * `trajectory` must be NULL or a live handle.
 */
size_t blockade_trajectory_len(const struct BlockadeTrajectory *trajectory);

/**
 * Sample times, us. Borrowed from the handle; NULL for NULL input.
 *
 * # Safety
 * `trajectory` must be NULL or a live handle; the pointer is valid while
 * the handle lives.
 */
const double *blockade_trajectory_times(const struct BlockadeTrajectory *trajectory);

/**
 * Intracavity photon number per sample. Borrowed from the handle.
 *
 * # Safety
 * `trajectory` must be NULL or a live handle; the pointer is valid while
 * the handle lives.
 */
const double *blockade_trajectory_photons(const struct BlockadeTrajectory *trajectory);

/**
 * Ground-state population per sample. Borrowed from the handle.
 *
 * # Safety
 * `trajectory` must be NULL or a live handle; the pointer is valid while
 * the handle lives.
 */
const double *blockade_trajectory_ground(const struct BlockadeTrajectory *trajectory);

/**
 * Excited-state population per sample. Borrowed from the handle.
 *
 * # Safety
 * `trajectory` must be NULL or a live handle; the pointer is valid while
 * the handle lives.
 */
const double *blockade_trajectory_excited(const struct BlockadeTrajectory *trajectory);

/**
 * Writes a trajectory in the CSV layout used by the CLI.
 *
 * # Safety
 * `trajectory` must be a live handle; `path` NUL-terminated.
 */
enum BlockadeStatus blockade_trajectory_write_csv(const struct BlockadeTrajectory *trajectory,
                                                  const char *path);

/**
 * Reads a trajectory CSV produced by this library or the CLI.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` writable. Release the result with
 * `blockade_trajectory_free`.
 */
enum BlockadeStatus blockade_trajectory_read_csv(const char *path, struct BlockadeTrajectory **out);

/**
 * Releases a trajectory handle.
 *
 * # Safety
 * `trajectory` must be NULL or an unfreed handle from this library.
 */
void blockade_trajectory_free(struct BlockadeTrajectory *trajectory);

/**
 * Number of count bins; 0 for NULL.
 *
 * # Safety
 * `counts` must be NULL or a live handle.
 */
size_t blockade_counts_len(const struct BlockadeCounts *counts);

/**
 * Bin centers, us. Borrowed from the handle.
 *
 * # Safety
 * `counts` must be NULL or a live handle; the pointer is valid while the
 * handle lives.
 */
const double *blockade_counts_times(const struct BlockadeCounts *counts);

/**
 * Detected counts per bin. Borrowed from the handle.
 *
 * # Safety
 * `counts` must be NULL or a live handle; the pointer is valid while the
 * handle lives.
 */
const uint64_t *blockade_counts_values(const struct BlockadeCounts *counts);

/**
 * Calibration in photons per count.
 *
 * # Safety
 * `counts` must be a live handle; `out` writable.
 */
enum BlockadeStatus blockade_counts_calibration(const struct BlockadeCounts *counts, double *out);

/**
 * Writes a count record as CSV plus its `.meta` sidecar.
 *
 * # Safety
 * `counts` must be a live handle; `path` NUL-terminated.
 */
enum BlockadeStatus blockade_counts_write_csv(const struct BlockadeCounts *counts,
                                              const char *path);

/**
 * Reads a count record written by this library or the CLI (the `.meta`
 * sidecar must sit next to the CSV).
 *
 * # Safety
 * `path` must be NUL-terminated; `out` writable. Release the result with
 * `blockade_counts_free`.
 */
enum BlockadeStatus blockade_counts_read_csv(const char *path, struct BlockadeCounts **out);

/**
 * Releases a counts handle.
 *
 * # Safety
 * `counts` must be NULL or an unfreed handle from this library.
 */
void blockade_counts_free(struct BlockadeCounts *counts);

/**
 * Locates the 10/50/90% crossings of a trajectory against a reference
 * photon number. `smooth_us <= 0` disables smoothing.
 *
 * # Safety
 * `trajectory` must be a live handle; `out` writable.
 */
enum BlockadeStatus blockade_transition_report(const struct BlockadeTrajectory *trajectory,
                                               double n_ref_photons,
                                               double smooth_us,
                                               struct BlockadeTransition *out);

/**
 * Peak windowed thermal occupation of a count record. Either output may
 * be NULL if not needed.
 *
 * # Safety
 * `counts` must be a live handle; non-NULL outputs writable.
 */
enum BlockadeStatus blockade_fluctuation_peak(const struct BlockadeCounts *counts,
                                              double window_us,
                                              double *out_t_us,
                                              double *out_n_th);

/**
 * Writes the sliding-window photon statistics of a count record as CSV.
 *
 * # Safety
 * `counts` must be a live handle; `path` NUL-terminated.
 */
enum BlockadeStatus blockade_fluctuations_write_csv(const struct BlockadeCounts *counts,
                                                    double window_us,
                                                    const char *path);

/**
 * Least-squares power law `y = amplitude * x^exponent` through positive
 * points. Any output pointer may be NULL.
 *
 * # Safety
 * `xs` and `ys` must point at `len` readable doubles; non-NULL outputs
 * writable.
 */
enum BlockadeStatus blockade_power_law_fit(const double *xs,
                                           const double *ys,
                                           size_t len,
                                           double *out_exponent,
                                           double *out_stderr,
                                           double *out_amplitude);

/**
 * Thermal occupation inferred from a mean photon number and a
 * binned-count g2 (clamped into [1, 2]).
 */
double blockade_thermal_occupation(double mean_photons, double g2);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLOCKADE_H */
