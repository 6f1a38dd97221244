#ifndef HELMFNO_H
#define HELMFNO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HfStatus {
  HF_STATUS_OK = 0,
  HF_STATUS_NULL_POINTER = 1,
  HF_STATUS_INVALID_ARGUMENT = 2,
  HF_STATUS_SHAPE = 3,
  HF_STATUS_IO = 4,
  HF_STATUS_FORMAT = 5,
  HF_STATUS_NUMERICAL = 6,
  HF_STATUS_PANIC = 7,
} HfStatus;

/**
 * Trained surrogate loaded from a checkpoint.
 */
typedef struct HfModel HfModel;

/**
 * Velocity model on a regular grid.
 */
typedef struct HfVelocity HfVelocity;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *hf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hf_version(void);

/**
 * Synthesizes one model of the named family on the 70 x 70 grid.
 *
 * # Safety
 * `family` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HfStatus hf_velocity_synthesize(const char *family, uint64_t seed, struct HfVelocity **out);

/**
 * Wraps caller-supplied velocities (m/s, row-major `nz x nx`).
 *
 * # Safety
 * `values` must point to `nz * nx` readable doubles and `out` must be valid.
 */
enum HfStatus hf_velocity_from_values(size_t nz,
                                      size_t nx,
                                      double dz,
                                      double dx,
                                      const double *values,
                                      struct HfVelocity **out);

/**
 * # Safety
 * `h` must be NULL or a handle from this library that was not yet freed.
 */
void hf_velocity_free(struct HfVelocity *h);

/**
 * # Safety
 * `h` must be a live handle; `nz` and `nx` must be valid pointers.
 */
enum HfStatus hf_velocity_dims(const struct HfVelocity *h, size_t *nz, size_t *nx);

/**
 * Copies the velocities (row-major) into `out`.
 *
 * # Safety
 * `h` must be a live handle and `out` must hold `len` writable doubles.
 */
enum HfStatus hf_velocity_values(const struct HfVelocity *h, double *out, size_t len);

/**
 * Time-domain simulation followed by the discrete transform at `freqs`.
 * Writes `nfreq` planes of `nz * nx` values to `re` and `im`.
 *
 * # Safety
 * `freqs` must hold `nfreq` doubles; `re` and `im` must hold `len` doubles each.
 */
enum HfStatus hf_simulate_freq(const struct HfVelocity *h,
                               double source_x,
                               double source_z,
                               const double *freqs,
                               size_t nfreq,
                               double *re,
                               double *im,
                               size_t len);

/**
 * Direct frequency-domain solve for a Ricker point source.
 * `nine_point` selects the 9-point stencil over the 5-point one.
 *
 * # Safety
 * `re` and `im` must hold `len` doubles each.
 */
enum HfStatus hf_helmholtz_solve(const struct HfVelocity *h,
                                 double freq,
                                 double source_x,
                                 double source_z,
                                 bool nine_point,
                                 double *re,
                                 double *im,
                                 size_t len);

/**
 * Loads a checkpoint written by `helmfno train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HfStatus hf_model_load(const char *path, struct HfModel **out);

/**
 * # Safety
 * `h` must be NULL or a handle from this library that was not yet freed.
 */
void hf_model_free(struct HfModel *h);

/**
 * Number of input channels the model expects (3, 4 or 5).
 *
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum HfStatus hf_model_in_channels(const struct HfModel *h, size_t *out);

/**
 * Predicts the wavefield at `freq` for a source at (`source_x`, `source_z`)
 * in physical units. Inputs are thread-safe: one model may serve many threads.
 *
 * # Safety
 * Both handles must be live; `re` and `im` must hold `len` floats each.
 */
enum HfStatus hf_model_predict(const struct HfModel *h,
                               const struct HfVelocity *vel,
                               double source_x,
                               double source_z,
                               double freq,
                               float *re,
                               float *im,
                               size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HELMFNO_H */
