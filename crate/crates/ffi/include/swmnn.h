#ifndef SWMNN_H
#define SWMNN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum SwmnnStatus {
  SWMNN_STATUS_OK = 0,
  SWMNN_STATUS_NULL_POINTER = 1,
  SWMNN_STATUS_INVALID_UTF8 = 2,
  SWMNN_STATUS_INVALID_INPUT = 3,
  SWMNN_STATUS_IO = 4,
  SWMNN_STATUS_BAD_MODEL = 5,
  SWMNN_STATUS_NUMERIC = 6,
  SWMNN_STATUS_PANIC = 7,
} SwmnnStatus;

/**
 * A trained model directory loaded into memory.
 */
typedef struct SwmnnModel SwmnnModel;

/**
 * A Kneser-Ney language model.
 */
typedef struct SwmnnNgram SwmnnNgram;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *swmnn_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *swmnn_version(void);

/**
 * Loads a model directory written by `swmnn train`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer. On
 * success `*out` receives a handle to release with [`swmnn_model_free`].
 */
enum SwmnnStatus swmnn_model_load(const char *dir, struct SwmnnModel **out);

/**
 * Releases a model handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from [`swmnn_model_load`] not yet freed.
 */
void swmnn_model_free(struct SwmnnModel *model);

/**
 * Probability that `sentence` is semantically rational.
 *
 * # Safety
 * `model` must be a live handle, `sentence` a NUL-terminated string and
 * `p_rational` a valid pointer.
 */
enum SwmnnStatus swmnn_model_score(const struct SwmnnModel *model,
                                   const char *sentence,
                                   double *p_rational);

/**
 * Predicted label: 1 for rational, 0 for irrational.
 *
 * # Safety
 * As for [`swmnn_model_score`], with `label` a valid pointer.
 */
enum SwmnnStatus swmnn_model_classify(const struct SwmnnModel *model,
                                      const char *sentence,
                                      int32_t *label);

/**
 * Loads a language model saved as JSON (for example `kn.json` from
 * `swmnn baseline-kn`).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer. On
 * success `*out` receives a handle to release with [`swmnn_ngram_free`].
 */
enum SwmnnStatus swmnn_ngram_load(const char *path, struct SwmnnNgram **out);

/**
 * Releases a language model handle. Null is ignored.
 *
 * # Safety
 * `ngram` must be null or a handle from [`swmnn_ngram_load`] not yet freed.
 */
void swmnn_ngram_free(struct SwmnnNgram *ngram);

/**
 * Average natural-log probability per prediction, end of sentence included.
 *
 * # Safety
 * `ngram` must be a live handle, `sentence` a NUL-terminated string and
 * `logprob` a valid pointer.
 */
enum SwmnnStatus swmnn_ngram_logprob(const struct SwmnnNgram *ngram,
                                     const char *sentence,
                                     double *logprob);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SWMNN_H */
