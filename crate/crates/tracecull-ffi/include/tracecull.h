#ifndef TRACECULL_H
#define TRACECULL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a tracecull call.
 */
typedef enum TcStatus {
  TcStatus_Ok = 0,
  TcStatus_InvalidArgument = 1,
  TcStatus_ParseError = 2,
  TcStatus_IoError = 3,
  /**
   * No usable samples or records in the input.
   */
  TcStatus_EmptyInput = 4,
  /**
   * The output buffer is too small; the required size is in `out_len`.
   */
  TcStatus_BufferTooSmall = 5,
  TcStatus_InternalError = 6,
} TcStatus;

/**
 * Streaming eliminator handle. Opaque; create with [`tc_eliminator_new`],
 * release with [`tc_eliminator_free`].
 */
typedef struct TcEliminator TcEliminator;

/**
 * Counters of one transform run.
 */
typedef struct TcTransformStats {
  uint64_t records_in;
  uint64_t tuples_out;
  uint64_t dropped;
  uint64_t unmapped_emits;
} TcTransformStats;

/**
 * Counters of one correlation run.
 */
typedef struct TcCorrelateStats {
  uint64_t paths;
  uint64_t simple;
  uint64_t complex;
  uint64_t degenerate_dropped;
  uint64_t orphans;
} TcCorrelateStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL terminated,
 * truncated to `cap`); returns the full message length in bytes.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes, or be NULL (then only the
 * length is returned).
 */
size_t tc_last_error(char *buf, size_t cap);

/**
 * Creates a streaming eliminator for a first-tier node stream.
 *
 * `threshold` is the first-message size boundary (strictly-over survives as
 * complex); `first_tier_port` is the service port clients hit. Returns NULL
 * when `threshold` is not a finite number.
 */
struct TcEliminator *tc_eliminator_new(double threshold, uint16_t first_tier_port);

/**
 * Releases an eliminator. NULL is a no-op.
 *
 * # Safety
 * `handle` must have come from [`tc_eliminator_new`] and not be freed twice.
 */
void tc_eliminator_free(struct TcEliminator *handle);

/**
 * Feeds one raw log line (no newline) through the eliminator.
 *
 * On TC_STATUS_OK, `*emitted` says whether the record survived; when it
 * did, the tuple line (no newline) is written NUL-terminated into `out` and
 * its length into `*out_len`. With a too-small buffer the required length
 * lands in `*out_len` and TC_STATUS_BUFFER_TOO_SMALL is returned; retrying
 * the same line with a bigger buffer yields the same record (the state
 * transitions of emitted records are idempotent, and the sequence number is
 * only consumed on success).
 *
 * # Safety
 * `handle` must be a live eliminator; `raw_line` a NUL-terminated string;
 * `emitted` and `out_len` writable; `out` must point to `out_cap` writable
 * bytes when `out_cap > 0`.
 */
enum TcStatus tc_eliminator_step(struct TcEliminator *handle,
                                 const char *raw_line,
                                 bool *emitted,
                                 char *out,
                                 size_t out_cap,
                                 size_t *out_len);

/**
 * Learns the first-message size threshold from a raw first-tier log.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `threshold_out` writable.
 */
enum TcStatus tc_threshold_file(const char *path,
                                uint16_t first_tier_port,
                                uint32_t max_iters,
                                double *threshold_out);

/**
 * Transforms a raw log file into a tuple file, optionally eliminating.
 *
 * # Safety
 * `input` and `output` must be NUL-terminated strings; `stats_out` may be
 * NULL when the counters are not wanted.
 */
enum TcStatus tc_transform_file(const char *input,
                                const char *output,
                                bool eliminate,
                                double threshold,
                                uint16_t first_tier_port,
                                struct TcTransformStats *stats_out);

/**
 * Correlates tuple files into causal paths, written as JSON lines.
 *
 * # Safety
 * `inputs` must point to `n_inputs` NUL-terminated strings; `output` must
 * be a NUL-terminated string; `stats_out` may be NULL.
 */
enum TcStatus tc_correlate_files(const char *const *inputs,
                                 size_t n_inputs,
                                 const char *output,
                                 bool drop_degenerate,
                                 struct TcCorrelateStats *stats_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRACECULL_H */
