#ifndef EMGWIRE_H
#define EMGWIRE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define EMG_CHANNELS 8

#define EMG_FRAME_LEN 11

typedef enum EmgStatus {
  EMG_STATUS_OK = 0,
  EMG_STATUS_NULL_POINTER = 1,
  EMG_STATUS_OUT_OF_RANGE = 2,
  EMG_STATUS_BAD_MARKER = 3,
  EMG_STATUS_DOMAIN = 4,
  EMG_STATUS_CONFIG = 5,
  EMG_STATUS_INTERNAL = 6,
} EmgStatus;

/**
 * Opaque frame synchronizer.
 */
typedef struct EmgFrameSync EmgFrameSync;

/**
 * Opaque 60 Hz style notch filter.
 */
typedef struct EmgNotch EmgNotch;

/**
 * One 10-bit protocol word. `positive` is 1 for the positive sign.
 */
typedef struct EmgWindowCode {
  uint8_t positive;
  uint16_t magnitude;
} EmgWindowCode;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code.
 */
const char *emg_status_str(enum EmgStatus status);

/**
 * Maps a 24-bit two's-complement conversion to its window code.
 *
 * # Safety
 * `out_code` must be null or valid for writes.
 */
enum EmgStatus emg_encode_window(int32_t raw, struct EmgWindowCode *out_code);

/**
 * Signed step count of a window code, in [-511, 511].
 *
 * # Safety
 * `out_steps` must be null or valid for writes.
 */
enum EmgStatus emg_decode_window(struct EmgWindowCode code, int16_t *out_steps);

/**
 * Packs eight codes into an 11-byte frame.
 *
 * # Safety
 * `codes` must point to 8 readable codes and `frame` to 11 writable bytes.
 */
enum EmgStatus emg_pack_frame(const struct EmgWindowCode *codes, uint8_t *frame);

/**
 * Unpacks an 11-byte frame into eight codes.
 *
 * # Safety
 * `frame` must point to 11 readable bytes and `codes` to 8 writable codes.
 */
enum EmgStatus emg_unpack_frame(const uint8_t *frame, struct EmgWindowCode *codes);

/**
 * Frames per second: `baud / frame_bits`.
 *
 * # Safety
 * `out_hz` must be null or valid for writes.
 */
enum EmgStatus emg_throughput(double baud, double frame_bits, double *out_hz);

/**
 * Quantizes a voltage with the default converter (4.5 V reference, gain 1).
 */
int32_t emg_adc_quantize(double volts);

/**
 * Volts represented by a signed step count.
 *
 * # Safety
 * `out_volts` must be null or valid for writes.
 */
enum EmgStatus emg_code_to_volts(int32_t steps, double *out_volts);

struct EmgFrameSync *emg_frame_sync_new(void);

/**
 * Feeds one byte. When a frame completes, copies it to `frame` and sets
 * `*ready` to 1; otherwise sets `*ready` to 0.
 *
 * # Safety
 * `sync` must come from [`emg_frame_sync_new`]; `frame` must have room for
 * 11 bytes and `ready` must be writable.
 */
enum EmgStatus emg_frame_sync_push(struct EmgFrameSync *sync,
                                   uint8_t byte,
                                   uint8_t *frame,
                                   uint8_t *ready);

/**
 * # Safety
 * `sync` must be null or come from [`emg_frame_sync_new`], and not be used afterwards.
 */
void emg_frame_sync_free(struct EmgFrameSync *sync);

/**
 * Creates a notch at `f0` Hz with a -3 dB width of `bandwidth` Hz.
 *
 * # Safety
 * `out_notch` must be null or valid for writes.
 */
enum EmgStatus emg_notch_new(double f0, double bandwidth, double fs, struct EmgNotch **out_notch);

/**
 * Filters `len` samples in place.
 *
 * # Safety
 * `notch` must come from [`emg_notch_new`]; `samples` must hold `len` values.
 */
enum EmgStatus emg_notch_process(struct EmgNotch *notch, double *samples, size_t len);

/**
 * # Safety
 * `notch` must be null or come from [`emg_notch_new`], and not be used afterwards.
 */
void emg_notch_free(struct EmgNotch *notch);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMGWIRE_H */
