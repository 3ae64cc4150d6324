#ifndef SSKCF_H
#define SSKCF_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of a fallible call.
 */
typedef enum SskcfStatus {
  SSKCF_STATUS_OK = 0,
  SSKCF_STATUS_NULL_POINTER = 1,
  SSKCF_STATUS_INVALID_ARGUMENT = 2,
  SSKCF_STATUS_UNKNOWN_KEY = 3,
  SSKCF_STATUS_INVALID_BUFFER = 4,
  SSKCF_STATUS_BOX_OUTSIDE_FRAME = 5,
  SSKCF_STATUS_BOX_TOO_SMALL = 6,
  SSKCF_STATUS_INDEX_OUT_OF_RANGE = 7,
  SSKCF_STATUS_INTERNAL = 8,
  SSKCF_STATUS_PANIC = 9,
} SskcfStatus;

/**
 * Parameter set used to create trackers.
 */
typedef struct SskcfConfig SskcfConfig;

typedef struct SskcfTracker SskcfTracker;

typedef struct SskcfBox {
  double x;
  double y;
  double w;
  double h;
} SskcfBox;

/**
 * Per-part status after the latest frame.
 */
typedef struct SskcfPart {
  /**
   * Part region centered on its current position.
   */
  struct SskcfBox region;
  double psr;
  double similarity;
  double weight;
  bool reliable;
} SskcfPart;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` and returns the
 * size (including the terminating NUL) needed to hold all of it.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t sskcf_last_error(char *buf, size_t len);

/**
 * Static, NUL-terminated version string.
 */
const char *sskcf_version(void);

/**
 * New parameter set holding the defaults. Free with [`sskcf_config_free`].
 */
struct SskcfConfig *sskcf_config_new(void);

/**
 * # Safety
 * `config` must be null or a pointer returned by [`sskcf_config_new`] that
 * has not been freed.
 */
void sskcf_config_free(struct SskcfConfig *config);

/**
 * Sets one parameter from text, using the same keys and value syntax as
 * the command-line config file (`psr_threshold`, `kernel`, ...).
 *
 * # Safety
 * `config` must be a live config handle; `key` and `value` must be
 * NUL-terminated strings.
 */
enum SskcfStatus sskcf_config_set(struct SskcfConfig *config, const char *key, const char *value);

/**
 * Writes the current value of `key` into `buf` and the needed buffer size
 * into `needed` (may be null).
 *
 * # Safety
 * `config` must be a live config handle, `key` a NUL-terminated string,
 * `buf` null or `len` writable bytes, `needed` null or writable.
 */
enum SskcfStatus sskcf_config_get(const struct SskcfConfig *config,
                                  const char *key,
                                  char *buf,
                                  size_t len,
                                  size_t *needed);

/**
 * Initializes a tracker on the first frame. `config` may be null for the
 * defaults. `channels` is 1 (gray) or 3 (RGB); `stride` is in bytes.
 *
 * # Safety
 * `pixels` must point to `stride * (height - 1) + width * channels`
 * readable bytes, `config` must be null or a live config handle, and `out`
 * must be writable.
 */
enum SskcfStatus sskcf_tracker_new(const struct SskcfConfig *config,
                                   const uint8_t *pixels,
                                   size_t width,
                                   size_t height,
                                   size_t stride,
                                   size_t channels,
                                   struct SskcfBox initial,
                                   struct SskcfTracker **out);

/**
 * # Safety
 * `tracker` must be null or a handle from [`sskcf_tracker_new`] that has
 * not been freed.
 */
void sskcf_tracker_free(struct SskcfTracker *tracker);

/**
 * Tracks into the next frame and writes the new target box to `out`.
 *
 * # Safety
 * As for [`sskcf_tracker_new`]; `tracker` must be a live handle.
 */
enum SskcfStatus sskcf_tracker_step(struct SskcfTracker *tracker,
                                    const uint8_t *pixels,
                                    size_t width,
                                    size_t height,
                                    size_t stride,
                                    size_t channels,
                                    struct SskcfBox *out);

/**
 * Current target box.
 *
 * # Safety
 * `tracker` must be a live handle and `out` writable.
 */
enum SskcfStatus sskcf_tracker_box(const struct SskcfTracker *tracker, struct SskcfBox *out);

/**
 * Accumulated scale factor relative to the initial box.
 *
 * # Safety
 * `tracker` must be a live handle and `out` writable.
 */
enum SskcfStatus sskcf_tracker_scale(const struct SskcfTracker *tracker, double *out);

/**
 * Number of parts (3 or 4), or 0 for a null handle.
 *
 * # Safety
 * `tracker` must be null or a live handle.
 */
size_t sskcf_tracker_part_count(const struct SskcfTracker *tracker);

/**
 * # Safety
 * `tracker` must be a live handle and `out` writable.
 */
enum SskcfStatus sskcf_tracker_part(const struct SskcfTracker *tracker,
                                    size_t index,
                                    struct SskcfPart *out);

/**
 * Intersection over union of two boxes.
 */
double sskcf_iou(struct SskcfBox a, struct SskcfBox b);

/**
 * Distance between box centers in pixels.
 */
double sskcf_center_error(struct SskcfBox a, struct SskcfBox b);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SSKCF_H */
