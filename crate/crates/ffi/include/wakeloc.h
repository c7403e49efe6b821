#ifndef WAKELOC_H
#define WAKELOC_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of MFCC coefficients per frame.
 */
#define WL_NUM_COEFFS 16

typedef enum WlStatus {
  WL_STATUS_OK = 0,
  WL_STATUS_NULL_POINTER = 1,
  WL_STATUS_INVALID_ARGUMENT = 2,
  WL_STATUS_IO = 3,
  WL_STATUS_FORMAT = 4,
  WL_STATUS_CONFIG = 5,
  WL_STATUS_SHAPE = 6,
  WL_STATUS_BUFFER_TOO_SMALL = 7,
  WL_STATUS_INTERNAL = 8,
} WlStatus;

/**
 * A loaded model. Thread-safe to share between streams.
 */
typedef struct WlModel WlModel;

/**
 * Per-stream state. Not safe to use from two threads at once.
 */
typedef struct WlStream WlStream;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *wl_last_error(void);

/**
 * Loads a weights file. `config` is a preset name or JSON path; pass NULL
 * to use the `<weights>.json` sidecar.
 *
 * # Safety
 * `weights_path` and a non-NULL `config` must be NUL-terminated strings;
 * `out` must be valid for one pointer write.
 */
enum WlStatus wl_model_load(const char *weights_path, const char *config, struct WlModel **out);

/**
 * # Safety
 * `model` must come from [`wl_model_load`] and not have been freed. NULL is
 * ignored.
 */
void wl_model_free(struct WlModel *model);

/**
 * Receptive field in frames; 0 for a NULL handle.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t wl_model_receptive_field(const struct WlModel *model);

/**
 * Number of frames [`wl_mfcc`] produces for `num_samples` samples.
 */
size_t wl_mfcc_frame_count(size_t num_samples);

/**
 * MFCC features of 16 kHz mono audio, written frame by frame: frame `t`
 * occupies `out[t * WL_NUM_COEFFS .. (t + 1) * WL_NUM_COEFFS]`.
 * `out_frames` receives the frame count even when the buffer is too small.
 *
 * # Safety
 * `samples` must point to `num_samples` floats, `out` to `out_capacity`
 * floats, and `out_frames` must be writable.
 */
enum WlStatus wl_mfcc(const float *samples,
                      size_t num_samples,
                      uint32_t sample_rate,
                      float *out,
                      size_t out_capacity,
                      size_t *out_frames);

/**
 * Creates a fresh stream over `model`. The model may be freed afterwards;
 * the stream keeps its own reference.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum WlStatus wl_stream_new(const struct WlModel *model, struct WlStream **out);

/**
 * Pushes one feature frame of [`WL_NUM_COEFFS`] values. `has_output` is set
 * to 1 when a score was produced (after the warm-up of R - 1 frames), in
 * which case `prob` and `offset` receive it; otherwise it is set to 0.
 *
 * # Safety
 * `stream` must be a live handle, `frame` must point to `WL_NUM_COEFFS`
 * floats, and the out pointers must be writable.
 */
enum WlStatus wl_stream_push(struct WlStream *stream,
                             const float *frame,
                             int32_t *has_output,
                             float *prob,
                             float *offset);

/**
 * Frames pushed since creation or the last reset; 0 for NULL.
 *
 * # Safety
 * `stream` must be NULL or a live handle.
 */
size_t wl_stream_frames_consumed(const struct WlStream *stream);

/**
 * # Safety
 * `stream` must be NULL or a live handle.
 */
enum WlStatus wl_stream_reset(struct WlStream *stream);

/**
 * # Safety
 * `stream` must come from [`wl_stream_new`] and not have been freed. NULL
 * is ignored.
 */
void wl_stream_free(struct WlStream *stream);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WAKELOC_H */
