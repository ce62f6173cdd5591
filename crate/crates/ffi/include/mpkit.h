#ifndef MPKIT_H
#define MPKIT_H

/* Generated by cbindgen from mpkit-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Call outcome. Zero means success; every other value names a failure class
 * and leaves a detail message readable through `mpkit_last_error`.
 */
typedef enum MpkitStatus {
  MPKIT_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  MPKIT_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  MPKIT_STATUS_INVALID_UTF8 = 2,
  /**
   * An argument was outside its documented domain.
   */
  MPKIT_STATUS_INVALID_ARGUMENT = 3,
  /**
   * Structurally invalid data (bad JSON, unknown item id, ...).
   */
  MPKIT_STATUS_INVALID_DATA = 4,
  /**
   * A normal matrix that must be inverted is singular.
   */
  MPKIT_STATUS_SINGULAR_SYSTEM = 5,
  /**
   * An output buffer is too small for the result.
   */
  MPKIT_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * Unexpected internal failure.
   */
  MPKIT_STATUS_INTERNAL = 7,
} MpkitStatus;

/**
 * Opaque handle to a trained analyst model.
 */
typedef struct MpkitModel MpkitModel;

/**
 * Opaque multi-round user session.
 *
 * Holds the private label on the user's side of the boundary; the type has
 * no serialized form, so the label cannot leak through this API.
 */
typedef struct MpkitSession MpkitSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Crate version as a static NUL-terminated string.
 */
const char *mpkit_version(void);

/**
 * Message of the most recent failure on this thread, or an empty string if
 * nothing failed yet. The pointer stays valid until the next failing call
 * on the same thread.
 */
const char *mpkit_last_error(void);

/**
 * Parses a model from its JSON form (as written by `mpkit train`).
 *
 * On success `*out` owns the handle; release it with `mpkit_model_free`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum MpkitStatus mpkit_model_from_json(const char *json, struct MpkitModel **out);

/**
 * Releases a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must be a handle from `mpkit_model_from_json`, freed only once.
 */
void mpkit_model_free(struct MpkitModel *model);

/**
 * Latent dimension of the model; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t mpkit_model_dim(const struct MpkitModel *model);

/**
 * Number of catalog items; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t mpkit_model_len(const struct MpkitModel *model);

/**
 * Reads catalog entry `index`: item id, bias, and the latent vector.
 *
 * `latent_out` must hold `mpkit_model_dim` doubles. Any output pointer may
 * be null to skip that field.
 *
 * # Safety
 * `model` must be a live handle; non-null output pointers must be valid,
 * with `latent_out` sized to the model dimension.
 */
enum MpkitStatus mpkit_model_item(const struct MpkitModel *model,
                                  size_t index,
                                  uint64_t *id_out,
                                  double *bias_out,
                                  double *latent_out);

/**
 * Midpoint obfuscation: `values_out[j] = ratings[j] - label * bias(items[j])`.
 *
 * Every item is revealed, so `values_out` must hold `len` doubles. Unknown
 * item ids fail with `InvalidData`.
 *
 * # Safety
 * `model` must be a live handle; `items` and `ratings` must hold `len`
 * elements; `values_out` must have capacity `len`.
 */
enum MpkitStatus mpkit_mp_obfuscate(const struct MpkitModel *model,
                                    int32_t label,
                                    const uint64_t *items,
                                    const double *ratings,
                                    size_t len,
                                    double *values_out);

/**
 * Sub-sampled midpoint obfuscation.
 *
 * Draws the keep/drop coins from a deterministic stream seeded by
 * `rng_seed`, then midpoint-shifts the kept ratings. The revealed subset
 * lands in `items_out`/`values_out` (capacity `len` suffices: the output
 * never exceeds the input) and its length in `*n_out`.
 *
 * # Safety
 * `model` must be a live handle; `items` and `ratings` must hold `len`
 * elements; `items_out` and `values_out` must have capacity `len`; `n_out`
 * must be valid.
 */
enum MpkitStatus mpkit_mpss_obfuscate(const struct MpkitModel *model,
                                      int32_t label,
                                      const uint64_t *items,
                                      const double *ratings,
                                      size_t len,
                                      uint64_t rng_seed,
                                      uint64_t *items_out,
                                      double *values_out,
                                      size_t *n_out);

/**
 * Least-squares profile estimate from revealed (item, value) pairs.
 *
 * Solves against the model's catalog with ridge stabilizer `ridge`;
 * `x_hat_out` must hold `x_hat_len >= mpkit_model_dim` doubles. The
 * expected squared error at noise scale `sigma` lands in `*loss_out` when
 * non-null.
 *
 * # Safety
 * `model` must be a live handle; `items` and `values` must hold `len`
 * elements; `x_hat_out` must have capacity `x_hat_len`.
 */
enum MpkitStatus mpkit_estimate_profile(const struct MpkitModel *model,
                                        const uint64_t *items,
                                        const double *values,
                                        size_t len,
                                        double ridge,
                                        double sigma,
                                        double *x_hat_out,
                                        size_t x_hat_len,
                                        double *loss_out);

/**
 * Expected squared estimation error of soliciting exactly `items`, at noise
 * scale `sigma`: `sigma^2 * tr[(sum v v^T)^-1]`.
 *
 * # Safety
 * `model` must be a live handle; `items` must hold `len` elements;
 * `loss_out` must be valid.
 */
enum MpkitStatus mpkit_theoretical_l2_loss(const struct MpkitModel *model,
                                           const uint64_t *items,
                                           size_t len,
                                           double sigma,
                                           double *loss_out);

/**
 * Expectation-preserving stochastic rounding of `values` onto the integer
 * scale `[lo, hi]`, deterministic in `rng_seed`.
 *
 * # Safety
 * `values` must hold `len` elements; `out` must have capacity `len`.
 */
enum MpkitStatus mpkit_round_ratings(const double *values,
                                     size_t len,
                                     int64_t lo,
                                     int64_t hi,
                                     uint64_t rng_seed,
                                     int64_t *out);

/**
 * Creates a session for a user with the given private label (+1 or -1).
 *
 * Release with `mpkit_session_free`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MpkitStatus mpkit_session_new(int32_t label, struct MpkitSession **out);

/**
 * Releases a session handle. Null is a no-op.
 *
 * # Safety
 * `session` must be a handle from `mpkit_session_new`, freed only once.
 */
void mpkit_session_free(struct MpkitSession *session);

/**
 * Total feedback points accumulated so far; 0 for a null handle.
 *
 * # Safety
 * `session` must be null or a live handle.
 */
size_t mpkit_session_n_points(const struct MpkitSession *session);

/**
 * Midpoint-obfuscates one round of ratings and accumulates the feedback.
 *
 * The round solicits `items` from the model's catalog; on failure the
 * session is left unchanged.
 *
 * # Safety
 * `session` must be a live handle with exclusive access; `model` must be a
 * live handle; `items` and `ratings` must hold `len` elements.
 */
enum MpkitStatus mpkit_session_add_round(struct MpkitSession *session,
                                         const struct MpkitModel *model,
                                         const uint64_t *items,
                                         const double *ratings,
                                         size_t len);

/**
 * Least-squares estimate over every accumulated round.
 *
 * `x_hat_out` must hold `x_hat_len` doubles, at least the model dimension
 * used by the rounds. The estimate's length lands in `*n_out` when
 * non-null; the expected loss in `*loss_out` when non-null.
 *
 * # Safety
 * `session` must be a live handle; `x_hat_out` must have capacity
 * `x_hat_len`; non-null output pointers must be valid.
 */
enum MpkitStatus mpkit_session_estimate(const struct MpkitSession *session,
                                        double ridge,
                                        double sigma,
                                        double *x_hat_out,
                                        size_t x_hat_len,
                                        double *loss_out,
                                        size_t *n_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MPKIT_H */
