#ifndef MLDBFM_H
#define MLDBFM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MldStatus {
  MLD_STATUS_OK = 0,
  MLD_STATUS_NULL_POINTER = 1,
  MLD_STATUS_INVALID_SPEC = 2,
  MLD_STATUS_INVALID_INPUT = 3,
  MLD_STATUS_INVALID_RANGE = 4,
  MLD_STATUS_OUT_OF_RANGE = 5,
  MLD_STATUS_ALIGNMENT = 6,
  MLD_STATUS_SHAPE_MISMATCH = 7,
  MLD_STATUS_TRAINING_DIVERGED = 8,
  MLD_STATUS_NUMERICAL = 9,
  MLD_STATUS_CONFIG = 10,
  MLD_STATUS_IO = 11,
  MLD_STATUS_BUFFER_TOO_SMALL = 12,
  MLD_STATUS_PANIC = 13,
} MldStatus;

/**
 * Feature rows with their column names.
 */
typedef struct MldFeatures MldFeatures;

/**
 * Fitted multi-output ridge regression.
 */
typedef struct MldRidge MldRidge;

/**
 * Recording plus its electrode layout.
 */
typedef struct MldSignal MldSignal;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *mld_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mld_version(void);

/**
 * Copy a row-major `n_samples x n_channels` recording. Grids `g` occupy
 * consecutive channels, `grid_rows[g] x grid_cols[g]` each, row-major.
 *
 * # Safety
 * `data` must hold `n_samples * n_channels` doubles, `grid_rows` and
 * `grid_cols` `n_grids` entries each, and `out` must be writable.
 */
enum MldStatus mld_signal_new(const double *data,
                              size_t n_samples,
                              size_t n_channels,
                              double fs,
                              const size_t *grid_rows,
                              const size_t *grid_cols,
                              size_t n_grids,
                              struct MldSignal **out);

/**
 * # Safety
 * `signal` must come from this library and not be freed twice; null is ignored.
 */
void mld_signal_free(struct MldSignal *signal);

/**
 * # Safety
 * `signal` must be a live handle; the outputs must be writable.
 */
enum MldStatus mld_signal_shape(const struct MldSignal *signal,
                                size_t *n_samples,
                                size_t *n_channels);

/**
 * Copy the samples into `out` (row-major, `len` doubles available).
 *
 * # Safety
 * `signal` must be a live handle and `out` must hold `len` doubles.
 */
enum MldStatus mld_signal_data(const struct MldSignal *signal, double *out, size_t len);

/**
 * Zero-phase band-pass of `order`, optional notch (skipped when
 * `notch_hz <= 0`), then crop to `[crop_start_s, crop_end_s)`.
 *
 * # Safety
 * `signal` must be a live handle and `out` writable.
 */
enum MldStatus mld_signal_preprocess(const struct MldSignal *signal,
                                     double low_hz,
                                     double high_hz,
                                     size_t order,
                                     double notch_hz,
                                     double notch_q,
                                     double crop_start_s,
                                     double crop_end_s,
                                     struct MldSignal **out);

/**
 * Block-wise Σ, Φ, Ω features over `block_size` blocks moved by `step`.
 *
 * # Safety
 * `signal` must be a live handle and `out` writable.
 */
enum MldStatus mld_extract_mld_bfm(const struct MldSignal *signal,
                                   size_t block_size,
                                   size_t step,
                                   double window_s,
                                   double overlap_s,
                                   struct MldFeatures **out);

/**
 * Per-channel RMS features.
 *
 * # Safety
 * `signal` must be a live handle and `out` writable.
 */
enum MldStatus mld_extract_rms(const struct MldSignal *signal,
                               double window_s,
                               double overlap_s,
                               struct MldFeatures **out);

/**
 * # Safety
 * `features` must come from this library and not be freed twice; null is ignored.
 */
void mld_features_free(struct MldFeatures *features);

/**
 * # Safety
 * `features` must be a live handle; the outputs must be writable.
 */
enum MldStatus mld_features_shape(const struct MldFeatures *features, size_t *rows, size_t *cols);

/**
 * # Safety
 * `features` must be a live handle and `out` must hold `len` doubles.
 */
enum MldStatus mld_features_data(const struct MldFeatures *features, double *out, size_t len);

/**
 * Provenance tag of column `index` such as `b3:omega`, or null when out of
 * range. Owned by the handle.
 *
 * # Safety
 * `features` must be a live handle.
 */
const char *mld_features_column_name(const struct MldFeatures *features, size_t index);

/**
 * Σ, Φ, Ω of one row-major `len x k` segment, written to `out[0..3]`.
 *
 * # Safety
 * `segment` must hold `len * k` doubles and `out` three.
 */
enum MldStatus mld_descriptors(const double *segment, size_t len, size_t k, double fs, double *out);

/**
 * Variance-weighted R² of `n x d` predictions.
 *
 * # Safety
 * `y` and `yhat` must hold `n * d` doubles and `out` one.
 */
enum MldStatus mld_r2_vw(const double *y, const double *yhat, size_t n, size_t d, double *out);

/**
 * Ridge with an unpenalized intercept on `n x p` inputs and `n x d` targets.
 *
 * # Safety
 * `x` must hold `n * p` doubles, `y` `n * d`, and `out` must be writable.
 */
enum MldStatus mld_ridge_fit(const double *x,
                             const double *y,
                             size_t n,
                             size_t p,
                             size_t d,
                             double alpha,
                             struct MldRidge **out);

/**
 * Predict `n` rows into `out` (`n x d`, row-major, `len` doubles available).
 *
 * # Safety
 * `model` must be a live handle, `x` must hold `n * p` doubles and `out` `len`.
 */
enum MldStatus mld_ridge_predict(const struct MldRidge *model,
                                 const double *x,
                                 size_t n,
                                 size_t p,
                                 double *out,
                                 size_t len);

/**
 * # Safety
 * `model` must come from this library and not be freed twice; null is ignored.
 */
void mld_ridge_free(struct MldRidge *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MLDBFM_H */
