/* C interface of the lieobs manifold-constrained observer library. */

#ifndef LIEOBS_H
#define LIEOBS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of the C API.
 */
typedef enum LieObsStatus {
  LIE_OBS_STATUS_OK = 0,
  LIE_OBS_STATUS_NULL_POINTER = 1,
  LIE_OBS_STATUS_INVALID_ARGUMENT = 2,
  LIE_OBS_STATUS_NUMERIC_ERROR = 3,
  LIE_OBS_STATUS_IO_ERROR = 4,
} LieObsStatus;

/**
 * Opaque observer: trained weights plus the running estimate and the GRU
 * hidden states of one rollout.
 */
typedef struct LieObsObserver LieObsObserver;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code.
 */
const char *lieobs_status_message(enum LieObsStatus status);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lieobs_version(void);

/**
 * Exponential map: writes the rotation `exp(hat(v))` to `out` in
 * column-major order.
 *
 * # Safety
 * `v` must point to 3 readable doubles and `out` to 9 writable doubles.
 */
enum LieObsStatus lieobs_exp_so3(const double *v, double *out);

/**
 * Logarithm map: writes the vee coordinates of `log(R)` to `out`.
 *
 * # Safety
 * `rotation` must point to 9 readable doubles (column-major) and `out` to
 * 3 writable doubles.
 */
enum LieObsStatus lieobs_log_so3(const double *rotation, double *out);

/**
 * Distance of a 3x3 matrix from the orthogonal group,
 * `|M M^T - I|_F`.
 *
 * # Safety
 * `matrix` must point to 9 readable doubles and `out` to one writable
 * double.
 */
enum LieObsStatus lieobs_manifold_distance(const double *matrix, double *out);

/**
 * Loads a checkpoint file and returns a fresh observer handle through
 * `out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer slot.
 */
enum LieObsStatus lieobs_observer_load(const char *path, struct LieObsObserver **out);

/**
 * Creates an observer with freshly initialized (untrained) weights; mainly
 * useful for smoke tests of a binding.
 *
 * # Safety
 * `out` must be a valid pointer slot.
 */
enum LieObsStatus lieobs_observer_random(uint32_t hidden_size,
                                         uint64_t seed,
                                         struct LieObsObserver **out);

/**
 * Hidden size of the observer's GRU layers; 0 for a null handle.
 *
 * # Safety
 * `observer` must be null or a live handle from this library.
 */
uint32_t lieobs_observer_hidden_size(const struct LieObsObserver *observer);

/**
 * Resets the estimate to the group identity and zeroes the hidden states,
 * starting a new rollout.
 *
 * # Safety
 * `observer` must be null or a live handle from this library.
 */
void lieobs_observer_reset(struct LieObsObserver *observer);

/**
 * Filters one epoch: consumes an 18-component measurement
 * `(vec(Rm) column-major, pm, angular, linear)` and writes the new
 * 18-component estimate `(vec(R), p, gyro bias, velocity bias)`.
 *
 * # Safety
 * `observer` must be a live handle; `measurement` must point to 18
 * readable doubles and `estimate_out` to 18 writable doubles.
 */
enum LieObsStatus lieobs_observer_step(struct LieObsObserver *observer,
                                       const double *measurement,
                                       double *estimate_out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `observer` must be null or a live handle not freed before.
 */
void lieobs_observer_free(struct LieObsObserver *observer);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LIEOBS_H */
