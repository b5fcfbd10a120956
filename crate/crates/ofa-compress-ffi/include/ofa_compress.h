/* C ABI for the once-for-all sequence compression library. */

#ifndef OFA_COMPRESS_H
#define OFA_COMPRESS_H

/* Generated by cbindgen from ofa-compress-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for every entry point.
 */
typedef enum OfaStatus {
  OFA_STATUS_OK = 0,
  OFA_STATUS_NULL_POINTER = 1,
  OFA_STATUS_INVALID_ARGUMENT = 2,
  OFA_STATUS_DIMENSION_MISMATCH = 3,
  OFA_STATUS_NON_FINITE = 4,
  OFA_STATUS_LAMBDA_OUT_OF_RANGE = 5,
  OFA_STATUS_IO = 6,
  OFA_STATUS_BAD_FORMAT = 7,
  OFA_STATUS_INTERNAL = 8,
} OfaStatus;

/**
 * Opaque handle to a loaded student model.
 */
typedef struct OfaStudent OfaStudent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ofa_version(void);

/**
 * Message for the most recent failure on this thread. Never null; empty
 * when no failure has occurred. Valid until the next call on this thread.
 */
const char *ofa_last_error_message(void);

/**
 * Apply the lambda modification to `len` alpha weights in [0, 1].
 * `out` must hold `len` values; `lambda` must lie in [0, 2).
 *
 * # Safety
 * `alpha` and `out` must be valid for `len` doubles.
 */
enum OfaStatus ofa_modify_alpha(const double *alpha, size_t len, double lambda, double *out);

/**
 * Number of fire events for `len` alpha weights under default thresholds.
 *
 * # Safety
 * `alpha` must be valid for `len` doubles; `out_count` must be valid.
 */
enum OfaStatus ofa_fire_count(const double *alpha, size_t len, size_t *out_count);

/**
 * Fire frame indices (0-based) for `len` alpha weights. `out_frames` must
 * hold at least `len` entries; the number written lands in `out_count`.
 *
 * # Safety
 * Pointer arguments must be valid for the stated capacities.
 */
enum OfaStatus ofa_segment_boundaries(const double *alpha,
                                      size_t len,
                                      size_t *out_frames,
                                      size_t *out_count);

/**
 * Integrate-and-fire pooling of a `frames` x `dim` row-major feature matrix
 * under `alpha` (length `frames`). `out` must hold `frames * dim` values;
 * the produced row count (at most `frames`) lands in `out_frames`.
 *
 * # Safety
 * Pointer arguments must be valid for the stated capacities.
 */
enum OfaStatus ofa_pool(const double *features,
                        size_t frames,
                        size_t dim,
                        const double *alpha,
                        double *out,
                        size_t *out_frames);

/**
 * Milliseconds of input represented by one output frame.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum OfaStatus ofa_frame_period_ms(size_t input_frames,
                                   size_t fires,
                                   double base_period_ms,
                                   double *out);

/**
 * Total multiply-accumulates of the mixer stack plus alpha module at
 * sequence length `n`.
 *
 * # Safety
 * `out_total` must be a valid pointer.
 */
enum OfaStatus ofa_transformer_macs(uint64_t hidden_dim,
                                    uint64_t ffn_dim,
                                    uint64_t num_layers,
                                    uint64_t alpha_macs_per_frame,
                                    uint64_t n,
                                    uint64_t *out_total);

/**
 * Fraction of MACs saved running at `n_comp` instead of `n_base`, with the
 * alpha module still charged at `n_base`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum OfaStatus ofa_macs_reduction(uint64_t hidden_dim,
                                  uint64_t ffn_dim,
                                  uint64_t num_layers,
                                  uint64_t alpha_macs_per_frame,
                                  uint64_t n_base,
                                  uint64_t n_comp,
                                  double *out);

/**
 * Load a student checkpoint from a NUL-terminated UTF-8 path.
 * On success `*out` owns the handle; release it with `ofa_student_free`.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be a valid pointer.
 */
enum OfaStatus ofa_student_load(const char *path, struct OfaStudent **out);

/**
 * Release a handle returned by `ofa_student_load`. Null is a no-op.
 *
 * # Safety
 * `handle` must be null or a pointer from `ofa_student_load`, passed once.
 */
void ofa_student_free(struct OfaStudent *handle);

/**
 * Input feature width the model expects.
 *
 * # Safety
 * `handle` and `out` must be valid pointers.
 */
enum OfaStatus ofa_student_input_dim(const struct OfaStudent *handle, size_t *out);

/**
 * Width of the compressed representation rows.
 *
 * # Safety
 * `handle` and `out` must be valid pointers.
 */
enum OfaStatus ofa_student_model_dim(const struct OfaStudent *handle, size_t *out);

/**
 * Lambda range the checkpoint was pre-trained on.
 *
 * # Safety
 * All pointers must be valid.
 */
enum OfaStatus ofa_student_lambda_range(const struct OfaStudent *handle,
                                        double *out_low,
                                        double *out_high);

/**
 * Run the inference path (heads discarded) on a `frames` x `dim` row-major
 * feature matrix at compression control `lambda`. `out` must hold
 * `frames * model_dim` values; the produced row count lands in `out_rows`
 * and the row width in `out_cols`.
 *
 * # Safety
 * Pointer arguments must be valid for the stated capacities.
 */
enum OfaStatus ofa_student_compress(const struct OfaStudent *handle,
                                    const double *features,
                                    size_t frames,
                                    size_t dim,
                                    double lambda,
                                    double *out,
                                    size_t *out_rows,
                                    size_t *out_cols);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OFA_COMPRESS_H */
