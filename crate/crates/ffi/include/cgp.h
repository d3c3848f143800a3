#ifndef CGP_H
#define CGP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CgpKernelFamily {
  CGP_KERNEL_FAMILY_GAUSSIAN = 0,
  CGP_KERNEL_FAMILY_MATERN52 = 1,
  CGP_KERNEL_FAMILY_MATERN32 = 2,
  CGP_KERNEL_FAMILY_EXPONENTIAL = 3,
} CgpKernelFamily;

/**
 * Status codes. The nonzero values for config, infeasible and numerical
 * errors match the `cgp` command's exit codes.
 */
typedef enum CgpStatus {
  CGP_STATUS_OK = 0,
  CGP_STATUS_NULL_POINTER = 1,
  CGP_STATUS_CONFIG = 2,
  CGP_STATUS_INFEASIBLE = 3,
  CGP_STATUS_NUMERICAL = 4,
  CGP_STATUS_PANIC = 5,
} CgpStatus;

/**
 * A fitted emulator.
 */
typedef struct CgpModel CgpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Fits an emulator.
 *
 * `config_json` is a NUL-terminated JSON run configuration. `inputs` holds
 * `n × dim` values row-major, where `dim` must equal the kernel's input
 * dimension; `outputs` holds `n` values. On success `*out` receives a handle
 * owned by the caller.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum CgpStatus cgp_model_build(const char *config_json,
                               const double *inputs,
                               const double *outputs,
                               size_t n,
                               size_t dim,
                               struct CgpModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from [`cgp_model_build`] and not be used afterwards.
 */
void cgp_model_free(struct CgpModel *model);

/**
 * Input dimension, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t cgp_model_dim(const struct CgpModel *model);

/**
 * Length of the coefficient vector, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t cgp_model_num_coefficients(const struct CgpModel *model);

/**
 * Writes the constrained mode at `n_points` points into `out`.
 *
 * # Safety
 * `points` must hold `n_points × dim` values and `out` room for `n_points`.
 */
enum CgpStatus cgp_model_mode(const struct CgpModel *model,
                              const double *points,
                              size_t n_points,
                              double *out);

/**
 * Writes the unconstrained kriging mean at `n_points` points into `out`.
 *
 * # Safety
 * As for [`cgp_model_mode`].
 */
enum CgpStatus cgp_model_kriging_mean(const struct CgpModel *model,
                                      const double *points,
                                      size_t n_points,
                                      double *out);

/**
 * Draws `n_samples` constrained sample paths and evaluates them at
 * `n_points` points. `out` receives `n_samples × n_points` values, one
 * path per row. The same seed gives the same paths.
 *
 * # Safety
 * `points` must hold `n_points × dim` values and `out` room for
 * `n_samples × n_points`.
 */
enum CgpStatus cgp_model_sample(const struct CgpModel *model,
                                uint64_t seed,
                                size_t n_samples,
                                const double *points,
                                size_t n_points,
                                double *out);

/**
 * Evaluates `∂^{p+q} K / ∂x^p ∂x'^q` for a one-dimensional kernel, or the
 * kernel itself in `dim` dimensions when `p = q = 0`.
 *
 * # Safety
 * `lengthscales`, `x` and `xp` must hold `dim` values; `out` one.
 */
enum CgpStatus cgp_kernel_eval(enum CgpKernelFamily family,
                               double variance,
                               const double *lengthscales,
                               size_t dim,
                               const double *x,
                               const double *xp,
                               uint32_t p,
                               uint32_t q,
                               double *out);

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *cgp_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CGP_H */
