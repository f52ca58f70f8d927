/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef BEATSYNTH_H
#define BEATSYNTH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * A list of beats read from NDJSON.
 */
typedef struct BsBeats BsBeats;

/**
 * Run configuration.
 */
typedef struct BsConfig BsConfig;

/**
 * Trained diffusion denoiser.
 */
typedef struct BsDdpm BsDdpm;

/**
 * Trained WGAN-GP generator and critic.
 */
typedef struct BsWgan BsWgan;

/**
 * Result code of every call.
 */
typedef int32_t BsStatus;

#define BS_OK 0

/**
 * A required pointer was null or a string was not UTF-8.
 */
#define BS_ERR_ARGUMENT 1

/**
 * Invalid configuration or argument value.
 */
#define BS_ERR_CONFIG 2

/**
 * Unreadable or malformed input data.
 */
#define BS_ERR_DATA 3

/**
 * Numeric failure: shape mismatch, divergence or undefined metric.
 */
#define BS_ERR_NUMERIC 4

/**
 * The output buffer is smaller than the reported required length.
 */
#define BS_ERR_BUFFER 5

/**
 * A panic was caught at the boundary.
 */
#define BS_ERR_INTERNAL 6

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *bs_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bs_version(void);

/**
 * Default configuration.
 */
BsStatus bs_config_new(BsConfig **out);

/**
 * Reads and validates a JSON config. Relative record paths resolve against
 * the file's directory.
 */
BsStatus bs_config_load(const char *file, BsConfig **out);

/**
 * Overrides the seed.
 */
BsStatus bs_config_set_seed(BsConfig *cfg, uint64_t seed);

/**
 * Writes the 64-character hex config hash plus a NUL into `buf`
 * (capacity `cap` bytes).
 */
BsStatus bs_config_hash(const BsConfig *cfg, char *buf, size_t cap, size_t *needed);

void bs_config_free(BsConfig *cfg);

/**
 * Runs the cached pipeline into `out_dir`; reports how many stages ran and
 * how many were reused.
 */
BsStatus bs_run_pipeline(const BsConfig *cfg,
                         const char *out_dir,
                         size_t *executed,
                         size_t *skipped);

/**
 * Reads beats from an NDJSON file.
 */
BsStatus bs_beats_load(const char *file, BsBeats **out);

BsStatus bs_beats_count(const BsBeats *beats, size_t *out);

/**
 * Copies the samples of beat `index`.
 */
BsStatus bs_beats_samples(const BsBeats *beats,
                          size_t index,
                          double *buf,
                          size_t cap,
                          size_t *needed);

/**
 * Label of beat `index` as an ASCII byte (non-ASCII labels map to `?`).
 */
BsStatus bs_beats_label(const BsBeats *beats, size_t index, char *out);

void bs_beats_free(BsBeats *beats);

/**
 * Encodes one normalized beat of length `n` as a `3 × n × n` stack
 * (GASF, GADF, MTF), row-major.
 */
BsStatus bs_embed(const double *samples,
                  size_t n,
                  size_t bins,
                  double *buf,
                  size_t cap,
                  size_t *needed);

/**
 * Recovers a beat of length `n` from an `n × n` GASF channel; `violation`
 * receives how far the diagonal strayed outside `[-1, 1]`.
 */
BsStatus bs_deembed(const double *gasf, size_t n, double *out, double *violation);

/**
 * Decodes format-212 bytes into two channels of `bytes_len / 3` samples
 * each; `needed` receives the per-channel length.
 */
BsStatus bs_decode_format212(const uint8_t *bytes,
                             size_t bytes_len,
                             int32_t *a,
                             int32_t *b,
                             size_t cap,
                             size_t *needed);

BsStatus bs_dtw(const double *a, size_t na, const double *b, size_t nb, double *out);

BsStatus bs_frechet(const double *a, size_t na, const double *b, size_t nb, double *out);

/**
 * Squared linear-kernel MMD between `nx` and `ny` row-major vectors of
 * dimension `dim`.
 */
BsStatus bs_mmd_linear(const double *x,
                       size_t nx,
                       const double *y,
                       size_t ny,
                       size_t dim,
                       double *out);

BsStatus bs_wgan_load(const char *file, BsWgan **out);

/**
 * Beat length the generator emits.
 */
BsStatus bs_wgan_beat_len(const BsWgan *model, size_t *out);

/**
 * Draws `n` beats into `buf` as `n × beat_len` values.
 */
BsStatus bs_wgan_sample(const BsWgan *model,
                        size_t n,
                        uint64_t seed,
                        double *buf,
                        size_t cap,
                        size_t *needed);

void bs_wgan_free(BsWgan *model);

BsStatus bs_ddpm_load(const char *file, BsDdpm **out);

/**
 * Side length of the square images the model produces (the beat length).
 */
BsStatus bs_ddpm_image_size(const BsDdpm *model, size_t *out);

/**
 * Draws `n` images into `buf` as `n × 3 × size × size` values.
 */
BsStatus bs_ddpm_sample(const BsDdpm *model,
                        size_t n,
                        uint64_t seed,
                        bool clip_denoised,
                        double *buf,
                        size_t cap,
                        size_t *needed);

void bs_ddpm_free(BsDdpm *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEATSYNTH_H */
