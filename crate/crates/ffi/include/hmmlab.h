#ifndef HMMLAB_H
#define HMMLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result of every fallible call.
 */
typedef enum HmmlabStatus {
  HMMLAB_STATUS_OK = 0,
  HMMLAB_STATUS_NULL_POINTER = 1,
  HMMLAB_STATUS_INVALID_ARGUMENT = 2,
  HMMLAB_STATUS_CONFIG = 3,
  HMMLAB_STATUS_DIMENSION = 4,
  HMMLAB_STATUS_OUTSIDE_SPACE = 5,
  HMMLAB_STATUS_NUMERICAL = 6,
  HMMLAB_STATUS_IO = 7,
  HMMLAB_STATUS_PANIC = 8,
} HmmlabStatus;

/**
 * Opaque model handle.
 */
typedef struct HmmlabModel HmmlabModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call on the same thread.
 */
const char *hmmlab_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hmmlab_version(void);

/**
 * Parses a model description (the `[model]` table of a scenario file,
 * without the header) and stores a new handle in `*out`.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HmmlabStatus hmmlab_model_from_toml(const char *toml, struct HmmlabModel **out);

/**
 * Loads the model of a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HmmlabStatus hmmlab_model_from_config(const char *path, struct HmmlabModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from one of the constructors and not be freed twice.
 */
void hmmlab_model_free(struct HmmlabModel *model);

/**
 * Parameter dimension, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t hmmlab_model_dim(const struct HmmlabModel *model);

/**
 * Number of hidden states, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t hmmlab_model_states(const struct HmmlabModel *model);

/**
 * Log-likelihood of `ys[0..n]` at `theta[0..dim]`.
 *
 * # Safety
 * Pointers must reference arrays of the stated lengths; `out` must be valid.
 */
enum HmmlabStatus hmmlab_log_likelihood(const struct HmmlabModel *model,
                                        const double *theta,
                                        size_t dim,
                                        const double *ys,
                                        size_t n,
                                        double *out);

/**
 * Simulates `n` steps at `theta`; fills `states` (0-based, may be null) and
 * `observations`.
 *
 * # Safety
 * Pointers must reference arrays of the stated lengths.
 */
enum HmmlabStatus hmmlab_simulate(const struct HmmlabModel *model,
                                  const double *theta,
                                  size_t dim,
                                  size_t n,
                                  uint64_t seed,
                                  size_t *states,
                                  double *observations);

/**
 * Mixing coefficient `D` of a row-major `s x s` transition matrix.
 *
 * # Safety
 * `matrix` must hold `s * s` values; `out` must be valid.
 */
enum HmmlabStatus hmmlab_mixing_coefficient(const double *matrix,
                                            size_t s,
                                            double tol,
                                            double *out);

/**
 * Runs one command (`simulate`, `constants`, `tests` or `posterior`) on a
 * scenario file, writing its outputs under `out_dir`.
 *
 * # Safety
 * All three arguments must be NUL-terminated strings.
 */
enum HmmlabStatus hmmlab_run(const char *command, const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HMMLAB_H */
