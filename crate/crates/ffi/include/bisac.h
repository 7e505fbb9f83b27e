#ifndef BISAC_H
#define BISAC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum BisacStatus {
  BISAC_STATUS_OK = 0,
  BISAC_STATUS_NULL_POINTER = 1,
  BISAC_STATUS_INVALID_ARGUMENT = 2,
  BISAC_STATUS_INVALID_FRAME = 3,
  BISAC_STATUS_INVALID_SCENE = 4,
  BISAC_STATUS_INVALID_CONFIG = 5,
  BISAC_STATUS_INSUFFICIENT_SAMPLES = 6,
  BISAC_STATUS_TOO_FEW_TRIALS = 7,
  BISAC_STATUS_PARSE = 8,
  BISAC_STATUS_IO = 9,
  BISAC_STATUS_BUFFER_TOO_SMALL = 10,
  BISAC_STATUS_PANIC = 11,
} BisacStatus;

/**
 * Opaque numerology plus one frame of transmitted symbols.
 */
typedef struct BisacFrame BisacFrame;

/**
 * Opaque sensing receiver bound to a frame's pilots.
 */
typedef struct BisacReceiver BisacReceiver;

/**
 * OFDM numerology; mirrors the core frame parameters.
 */
typedef struct BisacFrameParams {
  double carrier_frequency;
  double subcarrier_spacing;
  double cp_duration;
  size_t num_subcarriers;
  size_t num_symbols;
  size_t pilot_spacing_freq;
  size_t pilot_spacing_time;
} BisacFrameParams;

/**
 * Planar scene. Angles in radians, speed in m/s, RCS in m^2.
 */
typedef struct BisacScene {
  double tx[2];
  double rx[2];
  double target[2];
  double speed;
  double velocity_angle;
  double rcs;
  /**
   * Nonzero adds the direct path.
   */
  uint8_t los_present;
} BisacScene;

/**
 * Ground truth of a scene.
 */
typedef struct BisacTruth {
  double bistatic_range;
  double bistatic_velocity;
  double delay_nlos;
  double delay_los;
  double doppler;
  double aoa;
  double baseline;
} BisacTruth;

/**
 * Solved bistatic geometry. `bistatic_velocity` is NaN when it cannot be
 * resolved.
 */
typedef struct BisacGeometry {
  double bistatic_range;
  double d_tx;
  double d_rx;
  double bistatic_angle;
  double bistatic_velocity;
  uint8_t unstable;
} BisacGeometry;

/**
 * Detection outcome; the remaining fields are only meaningful when
 * `detected` is nonzero.
 */
typedef struct BisacEstimate {
  uint8_t detected;
  size_t first_crossing;
  size_t sample_index;
  double delay;
  double doppler;
  double eta;
  struct BisacGeometry geometry;
} BisacEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *bisac_last_error_message(void);

/**
 * Writes the reference numerology (30 GHz, 200 kHz, 1 us CP, 70 x 100,
 * pilots every 2nd subcarrier of every symbol).
 *
 * # Safety
 * `out` must be null or valid for a write.
 */
enum BisacStatus bisac_frame_params_reference(struct BisacFrameParams *out);

/**
 * Validates `params` and draws one frame of unit-modulus symbols.
 *
 * # Safety
 * `params` must be null or readable; `out` must be null or writable.
 */
enum BisacStatus bisac_frame_new(const struct BisacFrameParams *params,
                                 uint64_t pilot_seed,
                                 uint64_t data_seed,
                                 struct BisacFrame **out);

/**
 * # Safety
 * `frame` must be null or a handle from [`bisac_frame_new`] not yet freed.
 */
void bisac_frame_free(struct BisacFrame *frame);

/**
 * Samples in one received frame; 0 for a null handle.
 *
 * # Safety
 * `frame` must be null or a live handle.
 */
size_t bisac_frame_sample_count(const struct BisacFrame *frame);

/**
 * Cyclic-prefix length in samples; 0 for a null handle.
 *
 * # Safety
 * `frame` must be null or a live handle.
 */
size_t bisac_frame_cp_samples(const struct BisacFrame *frame);

/**
 * Ground truth of `scene` under the frame's numerology.
 *
 * # Safety
 * Pointers must be null or valid.
 */
enum BisacStatus bisac_scene_truth(const struct BisacFrame *frame,
                                   const struct BisacScene *scene,
                                   struct BisacTruth *out);

/**
 * Received samples of one frame for `scene` with complex white noise of
 * `noise_variance` (0 for noiseless). Writes `2 * capacity` doubles at most
 * and the sample count to `out_len`; fails with `BufferTooSmall` (and the
 * required count in `out_len`) when `capacity` is short.
 *
 * # Safety
 * `out_iq` must be writable for `2 * capacity` doubles; other pointers null
 * or valid.
 */
enum BisacStatus bisac_synthesize(const struct BisacFrame *frame,
                                  const struct BisacScene *scene,
                                  double noise_variance,
                                  uint64_t seed,
                                  double *out_iq,
                                  size_t capacity,
                                  size_t *out_len);

/**
 * Receiver for the frame's pilots with an `m_per x n_per` periodogram
 * (powers of two).
 *
 * # Safety
 * `frame` must be null or live; `out` null or writable.
 */
enum BisacStatus bisac_receiver_new(const struct BisacFrame *frame,
                                    size_t m_per,
                                    size_t n_per,
                                    struct BisacReceiver **out);

/**
 * # Safety
 * `receiver` must be null or a handle from [`bisac_receiver_new`] not yet
 * freed.
 */
void bisac_receiver_free(struct BisacReceiver *receiver);

/**
 * Peak metric of every hypothesis block up to `max_range`. Writes at most
 * `capacity` values and the block count to `out_len`.
 *
 * # Safety
 * `iq` readable for `2 * n_samples` doubles, `out_metrics` writable for
 * `capacity` doubles; other pointers null or valid.
 */
enum BisacStatus bisac_sweep(struct BisacReceiver *receiver,
                             const double *iq,
                             size_t n_samples,
                             double max_range,
                             double *out_metrics,
                             size_t capacity,
                             size_t *out_len);

/**
 * Sliding-window detection and localization: block sweep up to
 * `max_range`, first crossing of `kappa` (absolute), fine search over
 * `window` blocks, geometry from the baseline and receive pointing angle.
 *
 * # Safety
 * `iq` readable for `2 * n_samples` doubles; other pointers null or valid.
 */
enum BisacStatus bisac_detect(struct BisacReceiver *receiver,
                              const double *iq,
                              size_t n_samples,
                              double max_range,
                              double kappa,
                              size_t window,
                              double baseline,
                              double aoa_pointing,
                              struct BisacEstimate *out);

/**
 * Bistatic range, distances, angle and velocity from a delay/Doppler pair.
 *
 * # Safety
 * `out` must be null or writable.
 */
enum BisacStatus bisac_estimate_geometry(double delay,
                                         double doppler,
                                         double baseline,
                                         double aoa_pointing,
                                         double carrier_frequency,
                                         struct BisacGeometry *out);

/**
 * Threshold at the empirical `1 - p_f` quantile of `n` calibration
 * statistics (at least `ceil(10 / p_f)` of them).
 *
 * # Safety
 * `statistics` readable for `n` doubles; `out_kappa` null or writable.
 */
enum BisacStatus bisac_threshold_from_statistics(const double *statistics,
                                                 size_t n,
                                                 double p_f,
                                                 double *out_kappa);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BISAC_H */
