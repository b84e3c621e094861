#ifndef KERRCHAOS_H
#define KERRCHAOS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum KcStatus {
  KC_STATUS_OK = 0,
  KC_STATUS_NULL_POINTER = 1,
  KC_STATUS_INVALID_ARGUMENT = 2,
  KC_STATUS_TRUNCATION_OVERFLOW = 3,
  KC_STATUS_NON_FINITE_STATE = 4,
  KC_STATUS_NO_PERIOD = 5,
  KC_STATUS_INTERNAL = 6,
} KcStatus;

/**
 * Time series of observables.
 */
typedef struct KcSeries KcSeries;

/**
 * System parameters (detuning, Kerr strength, bath, drive).
 */
typedef struct KcSystem KcSystem;

/**
 * Observables at one sample time.
 */
typedef struct KcRecord {
  double t;
  double excitation;
  double purity;
  double linear_entropy;
  double von_neumann;
} KcRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Bichromatic drive `f0 + f1 exp(-i delta_mod t)`.
 */
enum KcStatus kc_system_new_bichromatic(double delta,
                                        double chi,
                                        double nbar,
                                        double f0,
                                        double f1,
                                        double delta_mod,
                                        struct KcSystem **out);

/**
 * Gaussian pulse train of amplitude `amp`, width `width`, spacing `period`.
 */
enum KcStatus kc_system_new_gaussian(double delta,
                                     double chi,
                                     double nbar,
                                     double amp,
                                     double width,
                                     double period,
                                     double offset,
                                     struct KcSystem **out);

enum KcStatus kc_system_new_constant(double delta,
                                     double chi,
                                     double nbar,
                                     double amp,
                                     struct KcSystem **out);

/**
 * Figure parameter set by name ("fig1" .. "fig6").
 *
 * # Safety
 * `name` must be a NUL-terminated string.
 */
enum KcStatus kc_system_from_fixture(const char *name, struct KcSystem **out);

/**
 * # Safety
 * `system` must come from a `kc_system_*` constructor and not be used again.
 */
void kc_system_free(struct KcSystem *system);

/**
 * Master-equation evolution from the vacuum in a basis of `dim` levels.
 *
 * # Safety
 * `system` must be a live handle; `out` must be writable.
 */
enum KcStatus kc_lindblad_run(const struct KcSystem *system,
                              size_t dim,
                              double dt,
                              double t_end,
                              size_t record_every,
                              struct KcSeries **out);

/**
 * State-diffusion ensemble mean from the vacuum.
 *
 * # Safety
 * `system` must be a live handle; `out` must be writable.
 */
enum KcStatus kc_qsd_run(const struct KcSystem *system,
                         size_t dim,
                         size_t n_traj,
                         uint64_t seed,
                         double dt,
                         double t_end,
                         size_t record_every,
                         struct KcSeries **out);

/**
 * Number of records; 0 for a null handle.
 *
 * # Safety
 * `series` must be a live handle or null.
 */
size_t kc_series_len(const struct KcSeries *series);

/**
 * # Safety
 * `series` must be a live handle; `out` must be writable.
 */
enum KcStatus kc_series_get(const struct KcSeries *series, size_t index, struct KcRecord *out);

/**
 * # Safety
 * `series` must come from a run function and not be used again.
 */
void kc_series_free(struct KcSeries *series);

/**
 * Largest Lyapunov exponent of the mean-amplitude equation started at the
 * origin, averaged over `[t_transient, t_total]`.
 *
 * # Safety
 * `system` must be a live handle; `out` must be writable.
 */
enum KcStatus kc_lyapunov(const struct KcSystem *system,
                          double t_transient,
                          double t_total,
                          double dt,
                          double *out);

/**
 * `1 / (2 nbar + 1)`; NaN for negative `nbar`.
 */
double kc_thermal_purity(double nbar);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `len > 0`) and returns its full length.
 *
 * # Safety
 * `buf` must be writable for `len` bytes, or null with `len == 0`.
 */
size_t kc_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *kc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KERRCHAOS_H */
