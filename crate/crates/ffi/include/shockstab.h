#ifndef SHOCKSTAB_H
#define SHOCKSTAB_H

/* Generated by cbindgen; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum ShockstabStatus {
  SHOCKSTAB_STATUS_OK = 0,
  SHOCKSTAB_STATUS_NULL_POINTER = 1,
  SHOCKSTAB_STATUS_INVALID_ARGUMENT = 2,
  SHOCKSTAB_STATUS_CONFIG = 3,
  SHOCKSTAB_STATUS_NUMERICAL = 4,
  SHOCKSTAB_STATUS_WRONG_KIND = 5,
  SHOCKSTAB_STATUS_IO = 6,
  SHOCKSTAB_STATUS_PANIC = 7,
} ShockstabStatus;

/**
 * Opaque conservation-law model.
 */
typedef struct ShockstabModel ShockstabModel;

/**
 * Opaque viscous shock profile bound to the model it was solved for.
 */
typedef struct ShockstabProfile ShockstabProfile;

/**
 * Opaque tracked shock location history.
 */
typedef struct ShockstabTrack ShockstabTrack;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *shockstab_last_error(void);

/**
 * Static version string.
 */
const char *shockstab_version(void);

/**
 * Looks up a built-in model (`burgers`, `burgers2x2`, `coupled_quadratic`, `slemrod_reduced`).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ShockstabStatus shockstab_model_from_registry(const char *name, struct ShockstabModel **out);

/**
 * Builds a polynomial model from its JSON description
 * (`name`, `u_minus`, `u_plus`, `flux`, `viscosity`).
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ShockstabStatus shockstab_model_from_json(const char *json, struct ShockstabModel **out);

/**
 * System size `n`, or 0 for a null handle.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t shockstab_model_dim(const struct ShockstabModel *model);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void shockstab_model_free(struct ShockstabModel *model);

/**
 * Solves the traveling-wave profile with default options.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum ShockstabStatus shockstab_profile_solve(const struct ShockstabModel *model,
                                             struct ShockstabProfile **out);

/**
 * Family dimension `ell`, or 0 for a null handle.
 *
 * # Safety
 * `profile` must be NULL or a live handle.
 */
size_t shockstab_profile_ell(const struct ShockstabProfile *profile);

/**
 * Fitted tail decay rate, or NaN for a null handle.
 *
 * # Safety
 * `profile` must be NULL or a live handle.
 */
double shockstab_profile_eta(const struct ShockstabProfile *profile);

/**
 * Residual of the profile equation, or NaN for a null handle.
 *
 * # Safety
 * `profile` must be NULL or a live handle.
 */
double shockstab_profile_residual(const struct ShockstabProfile *profile);

/**
 * Writes `u(x)` (n values) into `out`.
 *
 * # Safety
 * `profile` must be a live handle and `out` must hold `len` doubles.
 */
enum ShockstabStatus shockstab_profile_eval(const struct ShockstabProfile *profile,
                                            double x,
                                            double *out,
                                            size_t len);

/**
 * # Safety
 * `profile` must be NULL or a handle not yet freed.
 */
void shockstab_profile_free(struct ShockstabProfile *profile);

/**
 * Evans-function winding test of condition (D) with default contours.
 *
 * # Safety
 * `profile` must be a live handle; `pass` and `origin_winding` valid pointers.
 */
enum ShockstabStatus shockstab_condition_d(const struct ShockstabProfile *profile,
                                           bool *pass,
                                           int64_t *origin_winding);

/**
 * Asymptotic shock location for initial mass `mass[0..n]`; writes `ell` values.
 *
 * # Safety
 * `mass` must hold `n` doubles and `out` `len` doubles.
 */
enum ShockstabStatus shockstab_asymptotic_location(const struct ShockstabProfile *profile,
                                                   const double *mass,
                                                   size_t n,
                                                   double *out,
                                                   size_t len);

/**
 * `theta + psi1 + psi2` at `(x, t)` with the model's default template constants.
 *
 * # Safety
 * `profile` must be a live handle and `out` a valid pointer.
 */
enum ShockstabStatus shockstab_template_sum(const struct ShockstabProfile *profile,
                                            double x,
                                            double t,
                                            double *out);

/**
 * Largest relative residual of `draws` random evaluations of the identity
 * `interaction1` or `interaction2`.
 *
 * # Safety
 * `lemma` must be a NUL-terminated string and `residual` a valid pointer.
 */
enum ShockstabStatus shockstab_identity_residual(const char *lemma,
                                                 size_t draws,
                                                 uint64_t seed,
                                                 double *residual);

/**
 * Evolves `ubar + e0 (1+|x|)^{-3/2}` to `t_final` and tracks the shift
 * (one-parameter families only).
 *
 * # Safety
 * `profile` must be a live handle and `out` a valid pointer.
 */
enum ShockstabStatus shockstab_track_run(const struct ShockstabProfile *profile,
                                         double e0,
                                         double t_final,
                                         struct ShockstabTrack **out);

/**
 * Number of stored times, or 0 for a null handle.
 *
 * # Safety
 * `track` must be NULL or a live handle.
 */
size_t shockstab_track_len(const struct ShockstabTrack *track);

/**
 * Copies the times and shifts (first family coordinate) into caller buffers.
 *
 * # Safety
 * `times` and `delta` must each hold `len` doubles.
 */
enum ShockstabStatus shockstab_track_history(const struct ShockstabTrack *track,
                                             double *times,
                                             double *delta,
                                             size_t len);

/**
 * Mass-predicted asymptotic shift, or NaN for a null handle.
 *
 * # Safety
 * `track` must be NULL or a live handle.
 */
double shockstab_track_delta_infinity(const struct ShockstabTrack *track);

/**
 * # Safety
 * `track` must be NULL or a handle not yet freed.
 */
void shockstab_track_free(struct ShockstabTrack *track);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHOCKSTAB_H */
