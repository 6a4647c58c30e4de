#ifndef PPTP_H
#define PPTP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Length of a failure-risk vector.
 */
#define PPTP_CP_LEN MAX_STEPS

typedef enum PptpStatus {
  PPTP_STATUS_OK = 0,
  PPTP_STATUS_NULL_POINTER = 1,
  PPTP_STATUS_INVALID_ARGUMENT = 2,
  PPTP_STATUS_IO = 3,
  PPTP_STATUS_FORMAT = 4,
  PPTP_STATUS_VALIDATION = 5,
  PPTP_STATUS_SHAPE = 6,
  PPTP_STATUS_CHECKPOINT = 7,
  PPTP_STATUS_OUT_OF_RANGE = 8,
  PPTP_STATUS_PANIC = 98,
  PPTP_STATUS_OTHER = 99,
} PptpStatus;

/**
 * A trained model loaded from a checkpoint.
 */
typedef struct PptpModel PptpModel;

/**
 * A loaded, validated session.
 */
typedef struct PptpSession PptpSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call into this library on the same thread.
 */
const char *pptp_last_error(void);

/**
 * Loads and validates a session directory.
 *
 * # Safety
 * `dir` must be a nul-terminated string; `out` must be writable.
 */
enum PptpStatus pptp_session_load(const char *dir, struct PptpSession **out);

/**
 * # Safety
 * `session` must come from [`pptp_session_load`] and not be freed yet, or be null.
 */
void pptp_session_free(struct PptpSession *session);

/**
 * Number of analysis frames under the default windowing.
 *
 * # Safety
 * `session` must be a live handle; `out` must be writable.
 */
enum PptpStatus pptp_session_frame_count(const struct PptpSession *session, size_t *out);

/**
 * Writes the failure-risk vector as of `at_ms` into `out[0..10]`. Pass
 * `gamma <= 0` for the default discount.
 *
 * # Safety
 * `session` must be a live handle; `out` must hold `PPTP_CP_LEN` doubles.
 */
enum PptpStatus pptp_session_failure_risk(const struct PptpSession *session,
                                          int64_t at_ms,
                                          double gamma,
                                          double *out);

/**
 * Loads a checkpoint written by the training command.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum PptpStatus pptp_model_load(const char *path, struct PptpModel **out);

/**
 * # Safety
 * `model` must come from [`pptp_model_load`] and not be freed yet, or be null.
 */
void pptp_model_free(struct PptpModel *model);

/**
 * Number of output classes (3 or 7).
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum PptpStatus pptp_model_class_count(const struct PptpModel *model, size_t *out);

/**
 * Classifies frame `frame_index` of `session` with every signal present.
 * Writes the class id (0-based) to `out_class` and, when `out_logits` is
 * not null, the logits to `out_logits[0..logits_len]`; `logits_len` must
 * then equal the class count.
 *
 * # Safety
 * Handles must be live; `out_class` writable; `out_logits` null or
 * holding `logits_len` doubles.
 */
enum PptpStatus pptp_model_predict_frame(const struct PptpModel *model,
                                         const struct PptpSession *session,
                                         size_t frame_index,
                                         size_t *out_class,
                                         double *out_logits,
                                         size_t logits_len);

/**
 * Library version as a static nul-terminated string.
 */
const char *pptp_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PPTP_H */
