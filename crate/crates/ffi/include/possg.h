#ifndef POSSG_H
#define POSSG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every `possg_*` call.
 */
typedef enum PossgStatus {
  POSSG_STATUS_OK = 0,
  POSSG_STATUS_NULL_POINTER = 1,
  /**
   * Array sizes or spaces do not match.
   */
  POSSG_STATUS_DIMENSION = 2,
  POSSG_STATUS_INVALID_ARGUMENT = 3,
  POSSG_STATUS_NOT_METZLER = 4,
  /**
   * A resolvent or Euler step could not be factorized.
   */
  POSSG_STATUS_SINGULAR = 5,
  /**
   * Scenario JSON failed to parse or validate.
   */
  POSSG_STATUS_PARSE = 6,
  POSSG_STATUS_FAILURE = 7,
  /**
   * A Rust panic was caught at the boundary; this is a bug.
   */
  POSSG_STATUS_PANIC = 8,
} PossgStatus;

/**
 * A square generator matrix on a measure space.
 */
typedef struct PossgGenerator PossgGenerator;

/**
 * A finite measure space.
 */
typedef struct PossgSpace PossgSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next `possg_*` call on the same thread.
 */
const char *possg_last_error_message(void);

/**
 * # Safety
 * `weights` must point to `len` doubles; `out` must be writable.
 */
enum PossgStatus possg_space_new(const double *weights, size_t len, struct PossgSpace **out);

/**
 * # Safety
 * `space` must come from `possg_space_new` and not be freed twice. Null is ignored.
 */
void possg_space_free(struct PossgSpace *space);

/**
 * Number of atoms, or 0 for a null handle.
 *
 * # Safety
 * `space` must be null or a live handle.
 */
size_t possg_space_len(const struct PossgSpace *space);

/**
 * `sum_i f_i g_i m_i`.
 *
 * # Safety
 * `f` and `g` must point to `possg_space_len(space)` doubles.
 */
enum PossgStatus possg_dual_pairing(const struct PossgSpace *space,
                                    const double *f,
                                    const double *g,
                                    double *out);

/**
 * Weighted `l^p` norm; `p = INFINITY` gives the max norm.
 *
 * # Safety
 * `u` must point to `possg_space_len(space)` doubles.
 */
enum PossgStatus possg_lp_norm(const struct PossgSpace *space,
                               const double *u,
                               double p,
                               double *out);

/**
 * Generator from an `n x n` row-major matrix. Metzler structure is not required here.
 *
 * # Safety
 * `matrix` must point to `n * n` doubles where `n = possg_space_len(space)`.
 */
enum PossgStatus possg_generator_new(const struct PossgSpace *space,
                                     const double *matrix,
                                     struct PossgGenerator **out);

/**
 * Generator associated with the bilinear form with row-major coefficients `coeffs`.
 *
 * # Safety
 * `coeffs` must point to `n * n` doubles where `n = possg_space_len(space)`.
 */
enum PossgStatus possg_generator_from_form(const struct PossgSpace *space,
                                           const double *coeffs,
                                           struct PossgGenerator **out);

/**
 * # Safety
 * `g` must come from a `possg_generator_*` constructor and not be freed twice. Null is ignored.
 */
void possg_generator_free(struct PossgGenerator *g);

/**
 * Copies the row-major matrix into `out` (`n * n` doubles).
 *
 * # Safety
 * `out` must have room for `n * n` doubles.
 */
enum PossgStatus possg_generator_matrix(const struct PossgGenerator *g, double *out);

/**
 * `out = exp(tG) u`.
 *
 * # Safety
 * `u` and `out` must point to `n` doubles; they may alias.
 */
enum PossgStatus possg_semigroup_apply(const struct PossgGenerator *g,
                                       double t,
                                       const double *u,
                                       double *out);

/**
 * `out = (lambda - G)^{-power} u`.
 *
 * # Safety
 * `u` and `out` must point to `n` doubles; they may alias.
 */
enum PossgStatus possg_resolvent_apply(const struct PossgGenerator *g,
                                       double lambda,
                                       size_t power,
                                       const double *u,
                                       double *out);

/**
 * `out = (I - tG/n)^{-n} u`.
 *
 * # Safety
 * `u` and `out` must point to `dim` doubles; they may alias.
 */
enum PossgStatus possg_euler_formula(const struct PossgGenerator *g,
                                     double t,
                                     size_t n,
                                     const double *u,
                                     double *out);

/**
 * New handle holding the adjoint of `g` for the weighted pairing.
 *
 * # Safety
 * `out` must be writable.
 */
enum PossgStatus possg_weighted_adjoint(const struct PossgGenerator *g,
                                        struct PossgGenerator **out);

/**
 * Sets `is_metzler` to 1 if every off-diagonal entry is nonnegative, else 0.
 *
 * # Safety
 * `is_metzler` must be writable.
 */
enum PossgStatus possg_positivity_check(const struct PossgGenerator *g, int *is_metzler);

/**
 * `||exp(tG)||_{q -> q} <= m exp(omega t)`.
 *
 * # Safety
 * `m` and `omega` must be writable.
 */
enum PossgStatus possg_growth_bound(const struct PossgGenerator *g,
                                    double q,
                                    double *m,
                                    double *omega);

/**
 * Heat kernel `k(t, x, y)` written row-major into `out` (`n * n` doubles).
 *
 * # Safety
 * `out` must have room for `n * n` doubles.
 */
enum PossgStatus possg_extract_kernel(const struct PossgGenerator *g, double t, double *out);

/**
 * Runs a scenario given as JSON text. On success `*report` holds the report JSON,
 * to be released with `possg_string_free`, and `*passed` is 1 if every check passed.
 * `seed` overrides the scenario seed when `has_seed` is nonzero.
 *
 * # Safety
 * `json` must be a nul-terminated string; `report` and `passed` must be writable.
 */
enum PossgStatus possg_run_scenario_json(const char *json,
                                         uint64_t seed,
                                         int has_seed,
                                         char **report,
                                         int *passed);

/**
 * # Safety
 * `s` must come from this library and not be freed twice. Null is ignored.
 */
void possg_string_free(char *s);

/**
 * Library version as a static nul-terminated string.
 */
const char *possg_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POSSG_H */
