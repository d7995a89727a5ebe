#ifndef AIS_H
#define AIS_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of an FFI call. Zero means success.
 */
typedef enum AisStatus {
  AIS_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  AIS_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  AIS_STATUS_INVALID_UTF8 = 2,
  /**
   * The configuration JSON did not parse or validate.
   */
  AIS_STATUS_INVALID_CONFIG = 3,
  /**
   * The run itself failed.
   */
  AIS_STATUS_RUN_FAILED = 4,
  /**
   * An output buffer was too small; the required length is reported
   * through the length out-parameter.
   */
  AIS_STATUS_BUFFER_TOO_SMALL = 5,
  /**
   * The requested value is not present in this result.
   */
  AIS_STATUS_NOT_AVAILABLE = 6,
  /**
   * A panic was caught at the FFI boundary.
   */
  AIS_STATUS_PANIC = 7,
} AisStatus;

/**
 * Completed single-replicate run. Opaque; free with [`ais_result_free`].
 */
typedef struct AisResult AisResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread. Never null.
 */
const char *ais_last_error(void);

/**
 * Library version as a static string.
 */
const char *ais_version(void);

/**
 * Runs one replicate of the JSON run configuration with the given seed and
 * writes an owned result handle to `out`.
 *
 * `config_json` must be a null-terminated UTF-8 string holding a single run
 * configuration object (the same format the CLI accepts).
 *
 * # Safety
 * `config_json` must point to a valid null-terminated string and `out` to a
 * writable pointer slot.
 */
enum AisStatus ais_run_replicate(const char *config_json, uint64_t seed, struct AisResult **out);

/**
 * Frees a result handle. A null handle is a no-op.
 *
 * # Safety
 * `result` must be a pointer returned by [`ais_run_replicate`] that has not
 * been freed already.
 */
void ais_result_free(struct AisResult *result);

/**
 * Final normalization-constant estimate `Ẑ`.
 *
 * # Safety
 * `result` must be a live handle and `out` writable.
 */
enum AisStatus ais_result_z_hat(const struct AisResult *result, double *out);

/**
 * True normalization constant of the target, when known in closed form or by
 * quadrature. Fails with `NotAvailable` otherwise.
 *
 * # Safety
 * `result` must be a live handle and `out` writable.
 */
enum AisStatus ais_result_z_oracle(const struct AisResult *result, double *out);

/**
 * Final cumulative regret. Fails with `NotAvailable` when regret tracking
 * was disabled in the configuration.
 *
 * # Safety
 * `result` must be a live handle and `out` writable.
 */
enum AisStatus ais_result_final_cum_regret(const struct AisResult *result, double *out);

/**
 * KL divergence from the final proposal to the target over the final
 * partition, when tracked.
 *
 * # Safety
 * `result` must be a live handle and `out` writable.
 */
enum AisStatus ais_result_final_full_kl(const struct AisResult *result, double *out);

/**
 * Number of cells in the final partition.
 *
 * # Safety
 * `result` must be a live handle and `out` writable.
 */
enum AisStatus ais_result_partition_count(const struct AisResult *result, size_t *out);

/**
 * Copies the final proposal weights into `buf`. On entry `*len` holds the
 * buffer capacity; on exit it holds the number of arms. When the capacity
 * is too small nothing is copied and `BufferTooSmall` is returned with the
 * required length in `*len`, so a null `buf` with `*len = 0` queries the
 * size.
 *
 * # Safety
 * `len` must be writable, and `buf` must have capacity for `*len` doubles
 * unless `*len` is zero.
 */
enum AisStatus ais_result_final_q(const struct AisResult *result, double *buf, size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AIS_H */
