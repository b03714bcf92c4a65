#ifndef TWOHMM_H
#define TWOHMM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TwohmmStatus {
  TWOHMM_STATUS_OK = 0,
  TWOHMM_STATUS_NULL_POINTER = 1,
  TWOHMM_STATUS_INVALID_UTF8 = 2,
  TWOHMM_STATUS_PARSE_ERROR = 3,
  TWOHMM_STATUS_INVALID_MODEL = 4,
  TWOHMM_STATUS_INVALID_OBSERVATION = 5,
  TWOHMM_STATUS_IMPOSSIBLE_OBSERVATION = 6,
  TWOHMM_STATUS_EMPTY_INPUT = 7,
  TWOHMM_STATUS_BUFFER_TOO_SMALL = 8,
  TWOHMM_STATUS_NO_SEGMENT = 9,
  TWOHMM_STATUS_STREAM_FINALIZED = 10,
  TWOHMM_STATUS_STREAM_POISONED = 11,
  TWOHMM_STATUS_PANIC = 12,
} TwohmmStatus;

/**
 * Opaque model handle.
 */
typedef struct TwohmmModel TwohmmModel;

/**
 * Opaque streaming decoder handle with its queue of committed segments.
 */
typedef struct TwohmmStream TwohmmStream;

/**
 * Header of a committed segment; `node_state` is -1 for a flushed tail.
 */
typedef struct TwohmmSegmentInfo {
  uint64_t start;
  uint64_t end;
  size_t len;
  int32_t node_state;
} TwohmmSegmentInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *twohmm_last_error_message(void);

/**
 * Parses and validates a JSON model document.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum TwohmmStatus twohmm_model_from_json(const char *json, struct TwohmmModel **out);

/**
 * # Safety
 * `model` must come from [`twohmm_model_from_json`] and not be freed twice.
 */
void twohmm_model_free(struct TwohmmModel *model);

/**
 * Writes the case label as 1, 2 or 3.
 *
 * # Safety
 * Pointers must be valid.
 */
enum TwohmmStatus twohmm_model_case(const struct TwohmmModel *model, int32_t *out_case);

/**
 * Writes the stationary distribution `(pi_a, pi_b)` to `out[0..2]`.
 *
 * # Safety
 * `out` must hold two doubles.
 */
enum TwohmmStatus twohmm_model_stationary(const struct TwohmmModel *model, double *out);

/**
 * Batch MAP decoding of `len` symbol indices into `out_states[0..len]`.
 * `out_log_likelihood` may be null.
 *
 * # Safety
 * `symbols` and `out_states` must hold `len` elements.
 */
enum TwohmmStatus twohmm_decode_symbols(const struct TwohmmModel *model,
                                        const uint32_t *symbols,
                                        size_t len,
                                        uint8_t *out_states,
                                        double *out_log_likelihood);

/**
 * Batch MAP decoding of `len` real observations.
 *
 * # Safety
 * `values` and `out_states` must hold `len` elements.
 */
enum TwohmmStatus twohmm_decode_reals(const struct TwohmmModel *model,
                                      const double *values,
                                      size_t len,
                                      uint8_t *out_states,
                                      double *out_log_likelihood);

/**
 * New streaming decoder over a copy of `model`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum TwohmmStatus twohmm_stream_new(const struct TwohmmModel *model, struct TwohmmStream **out);

/**
 * # Safety
 * `stream` must come from [`twohmm_stream_new`] and not be freed twice.
 */
void twohmm_stream_free(struct TwohmmStream *stream);

/**
 * Feeds one symbol index; a committed segment is queued for
 * [`twohmm_stream_take_segment`].
 *
 * # Safety
 * `stream` must be a live handle.
 */
enum TwohmmStatus twohmm_stream_push_symbol(struct TwohmmStream *stream, uint32_t symbol);

/**
 * Feeds one real observation.
 *
 * # Safety
 * `stream` must be a live handle.
 */
enum TwohmmStatus twohmm_stream_push_real(struct TwohmmStream *stream, double value);

/**
 * Describes the oldest queued segment without removing it. Returns
 * `NoSegment` when the queue is empty.
 *
 * # Safety
 * Pointers must be valid.
 */
enum TwohmmStatus twohmm_stream_peek_segment(const struct TwohmmStream *stream,
                                             struct TwohmmSegmentInfo *out_info);

/**
 * Removes the oldest queued segment, copying its states to
 * `out_states[0..capacity]`. Fails with `BufferTooSmall`, leaving the
 * segment queued, if `capacity` is below its length.
 *
 * # Safety
 * `out_states` must hold `capacity` bytes; `out_info` may be null.
 */
enum TwohmmStatus twohmm_stream_take_segment(struct TwohmmStream *stream,
                                             uint8_t *out_states,
                                             size_t capacity,
                                             struct TwohmmSegmentInfo *out_info);

/**
 * Ends the stream, queueing the uncommitted tail. An empty tail queues
 * nothing and still finalizes the stream.
 *
 * # Safety
 * `stream` must be a live handle.
 */
enum TwohmmStatus twohmm_stream_flush(struct TwohmmStream *stream);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TWOHMM_H */
