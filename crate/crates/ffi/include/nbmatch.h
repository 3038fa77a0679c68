#ifndef NBMATCH_H
#define NBMATCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NbmStatus {
  NBM_STATUS_OK = 0,
  NBM_STATUS_NULL_ARGUMENT = 1,
  NBM_STATUS_INVALID_UTF8 = 2,
  NBM_STATUS_IO = 3,
  NBM_STATUS_MALFORMED_MODEL = 4,
  NBM_STATUS_FORMAT_VERSION = 5,
  NBM_STATUS_INVARIANT_VIOLATION = 6,
  NBM_STATUS_UNSCORABLE = 7,
  NBM_STATUS_INVALID_ARGUMENT = 8,
  NBM_STATUS_NO_THRESHOLD = 9,
  NBM_STATUS_PANIC = 98,
  NBM_STATUS_OTHER = 99,
} NbmStatus;

typedef enum NbmDecision {
  NBM_DECISION_UNSET = -1,
  NBM_DECISION_NON_MATCH = 0,
  NBM_DECISION_MATCH = 1,
} NbmDecision;

/**
 * Opaque model handle.
 */
typedef struct NbmModel NbmModel;

typedef struct NbmScore {
  double log_score;
  uint32_t features_used;
  enum NbmDecision decision;
} NbmScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *nbm_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void nbm_string_free(char *s);

/**
 * Loads a model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum NbmStatus nbm_model_load(const char *path, struct NbmModel **out);

/**
 * Parses a model from the text of a model file.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum NbmStatus nbm_model_from_toml(const char *text, struct NbmModel **out);

/**
 * Serializes a model. The returned string is freed with `nbm_string_free`.
 * Returns NULL on failure.
 *
 * # Safety
 * `model` must be a live handle.
 */
char *nbm_model_to_toml(const struct NbmModel *model);

/**
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum NbmStatus nbm_model_save(const struct NbmModel *model, const char *path);

/**
 * # Safety
 * `model` must be NULL or a handle from this library not yet freed.
 */
void nbm_model_free(struct NbmModel *model);

/**
 * Number of features, or 0 for a NULL handle.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t nbm_model_num_features(const struct NbmModel *model);

/**
 * Model version, or 0 for a NULL handle.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
uint64_t nbm_model_version(const struct NbmModel *model);

/**
 * # Safety
 * `model` must be a live handle; `alpha` and `beta` must be writable.
 */
enum NbmStatus nbm_model_feature_params(const struct NbmModel *model,
                                        size_t index,
                                        double *alpha,
                                        double *beta);

/**
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum NbmStatus nbm_model_threshold(const struct NbmModel *model, double *out);

/**
 * Scores precomputed edit-distance counts. `present[i] == 0` marks feature
 * `i` as missing; `n` must equal the model's feature count.
 *
 * # Safety
 * `counts` and `present` must point to `n` readable elements; `out` must be
 * writable.
 */
enum NbmStatus nbm_model_score_counts(const struct NbmModel *model,
                                      const uint32_t *counts,
                                      const uint8_t *present,
                                      size_t n,
                                      struct NbmScore *out);

/**
 * Scores two records given as field arrays in schema order. A NULL entry
 * marks a missing value. The model's normalization is applied first.
 *
 * # Safety
 * `fields_a` and `fields_b` must each point to `n` entries that are NULL or
 * NUL-terminated strings; `out` must be writable.
 */
enum NbmStatus nbm_model_score_strings(const struct NbmModel *model,
                                       const char *const *fields_a,
                                       const char *const *fields_b,
                                       size_t n,
                                       struct NbmScore *out);

/**
 * Absorbs one confirmed match given as counts and returns a new handle in
 * `out`. The input handle is not modified.
 *
 * # Safety
 * As for `nbm_model_score_counts`; `out` must be writable.
 */
enum NbmStatus nbm_model_update_counts(const struct NbmModel *model,
                                       const uint32_t *counts,
                                       const uint8_t *present,
                                       size_t n,
                                       struct NbmModel **out);

/**
 * # Safety
 * `s` and `t` must be NUL-terminated strings; `out` must be writable.
 */
enum NbmStatus nbm_edit_distance(const char *s, const char *t, uint32_t *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum NbmStatus nbm_negbin_logpmf(uint64_t x, double alpha, double beta, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NBMATCH_H */
