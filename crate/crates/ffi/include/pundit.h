/* C interface for the pundit equation-discovery library. */

#ifndef PUNDIT_H
#define PUNDIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum PunditStatus {
  PunditStatus_Ok = 0,
  PunditStatus_NullArgument = 1,
  PunditStatus_InvalidUtf8 = 2,
  PunditStatus_ParseError = 3,
  PunditStatus_ShapeError = 4,
  PunditStatus_NumericError = 5,
} PunditStatus;

/**
 * Opaque model handle.
 */
typedef struct PunditModel PunditModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static nul-terminated string.
 */
const char *pundit_version(void);

/**
 * Message describing the most recent error on this thread. Valid until
 * the next failing call on the same thread.
 */
const char *pundit_last_error_message(void);

/**
 * Parse a model from its JSON document.
 *
 * # Safety
 * `json` must be a valid nul-terminated string and `out` a valid pointer.
 */
enum PunditStatus pundit_model_from_json(const char *json, struct PunditModel **out);

/**
 * Serialize a model to its JSON document (round-trips bit for bit).
 *
 * # Safety
 * `model` must be a live handle from this library and `out` a valid
 * pointer. Free the returned string with [`pundit_string_free`].
 */
enum PunditStatus pundit_model_to_json(const struct PunditModel *model, char **out);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must have been returned by this library and not freed before.
 */
void pundit_string_free(char *s);

/**
 * Release a model handle.
 *
 * # Safety
 * `model` must have been returned by this library and not freed before.
 */
void pundit_model_free(struct PunditModel *model);

/**
 * Model dimensions of a live handle.
 *
 * # Safety
 * All pointers must be valid.
 */
enum PunditStatus pundit_model_dims(const struct PunditModel *model,
                                    uintptr_t *n_inputs,
                                    uintptr_t *n_units,
                                    uintptr_t *n_outputs);

/**
 * Evaluate the model at one input point. Inputs are clamped away from
 * zero before the forward pass; `in_re`/`in_im` must hold `n_in` values
 * and `out_re`/`out_im` receive `n_out` values.
 *
 * # Safety
 * All pointers must be valid for the stated lengths.
 */
enum PunditStatus pundit_model_eval(const struct PunditModel *model,
                                    const double *in_re,
                                    const double *in_im,
                                    uintptr_t n_in,
                                    double *out_re,
                                    double *out_im,
                                    uintptr_t n_out);

/**
 * Render the model's equations as text (terms merged and pruned with the
 * default thresholds, rounded to `decimals` places). Three-input models
 * use the variable names x, y, z; others use x1..xn.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer. Free the
 * returned string with [`pundit_string_free`].
 */
enum PunditStatus pundit_model_render(const struct PunditModel *model,
                                      uint32_t decimals,
                                      char **out);

/**
 * Fill `out` with the time-delay lag schedule for `n_lags` lags.
 *
 * # Safety
 * `out` must point to at least `n_lags` writable usize slots.
 */
enum PunditStatus pundit_lag_schedule(uintptr_t n_lags, double lag_base, uintptr_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PUNDIT_H */
