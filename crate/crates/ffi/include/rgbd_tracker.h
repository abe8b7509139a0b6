#ifndef RGBD_TRACKER_H
#define RGBD_TRACKER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RgbdStatus {
  RGBD_STATUS_OK = 0,
  RGBD_STATUS_NULL_POINTER = 1,
  RGBD_STATUS_INVALID_ARGUMENT = 2,
  RGBD_STATUS_IO = 3,
  RGBD_STATUS_CONFIG = 4,
  RGBD_STATUS_TRACKING = 5,
  RGBD_STATUS_NOT_INITIALIZED = 6,
  RGBD_STATUS_PANIC = 7,
} RgbdStatus;

/**
 * Opaque tracker handle.
 */
typedef struct RgbdTracker RgbdTracker;

/**
 * Axis-aligned box in pixels; `left`/`top` is the top-left corner.
 */
typedef struct RgbdBox {
  double left;
  double top;
  double width;
  double height;
} RgbdBox;

typedef struct RgbdStepResult {
  struct RgbdBox bbox;
  double score;
  /**
   * 1 while depth masking is active, 0 while it is stopped.
   */
  uint8_t mask_active;
  /**
   * Target depth estimate in meters.
   */
  double target_depth;
  /**
   * 1 when the frame failed and the previous box was repeated.
   */
  uint8_t coasted;
} RgbdStepResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a tracker. `config_path` may be null for the defaults;
 * `weights_path`, when not null, replaces the config's refiner weights.
 * Masking and refinement run only when both the config and the flag enable
 * them. The `TSDM_SEED` environment variable overrides the seed.
 *
 * # Safety
 * Non-null strings must be NUL-terminated; `out` must be writable.
 */
enum RgbdStatus rgbd_tracker_new(const char *config_path,
                                 const char *weights_path,
                                 bool enable_mg,
                                 bool enable_dr,
                                 struct RgbdTracker **out);

/**
 * Releases a tracker; null is ignored.
 *
 * # Safety
 * `tracker` must come from [`rgbd_tracker_new`] and not be used afterwards.
 */
void rgbd_tracker_free(struct RgbdTracker *tracker);

/**
 * Starts (or restarts) tracking `target` in the first frame.
 *
 * # Safety
 * `tracker` must be live; `color` and `depth` must hold a full frame.
 */
enum RgbdStatus rgbd_tracker_init(struct RgbdTracker *tracker,
                                  const uint8_t *color,
                                  const uint16_t *depth,
                                  size_t width,
                                  size_t height,
                                  struct RgbdBox target);

/**
 * Tracks the next frame. A frame the pipeline cannot process repeats the
 * previous box with `coasted = 1` and still returns `Ok`.
 *
 * # Safety
 * `tracker` must be live; `color` and `depth` must hold a full frame;
 * `out` must be writable.
 */
enum RgbdStatus rgbd_tracker_step(struct RgbdTracker *tracker,
                                  const uint8_t *color,
                                  const uint16_t *depth,
                                  size_t width,
                                  size_t height,
                                  struct RgbdStepResult *out);

/**
 * Intersection over union; 0 for degenerate input.
 */
double rgbd_iou(struct RgbdBox a, struct RgbdBox b);

/**
 * Area under the success curve of `n` per-frame IOU values.
 *
 * # Safety
 * `ious` must point to `n` values; `out` must be writable.
 */
enum RgbdStatus rgbd_success_auc(const double *ious, size_t n, double *out);

/**
 * Message of the last failed call on this thread, empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *rgbd_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RGBD_TRACKER_H */
