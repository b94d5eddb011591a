#ifndef SIVISM_H
#define SIVISM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SivismStatus {
  SIVISM_STATUS_OK = 0,
  SIVISM_STATUS_NULL_POINTER = 1,
  SIVISM_STATUS_INVALID_ARGUMENT = 2,
  SIVISM_STATUS_INVALID_CONFIG = 3,
  SIVISM_STATUS_NUMERICAL = 4,
  SIVISM_STATUS_IO = 5,
  SIVISM_STATUS_RUNTIME = 6,
  SIVISM_STATUS_PANIC = 7,
} SivismStatus;

/**
 * A target posterior.
 */
typedef struct SivismTarget SivismTarget;

/**
 * A minimax score-matching training session.
 */
typedef struct SivismTrainer SivismTrainer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *sivism_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sivism_version(void);

/**
 * Builds a target from its JSON description, e.g. `{"name": "banana"}`.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SivismStatus sivism_target_new(const char *spec_json, struct SivismTarget **out);

/**
 * # Safety
 * `target` must come from [`sivism_target_new`] and not be used afterwards.
 */
void sivism_target_free(struct SivismTarget *target);

/**
 * # Safety
 * Pointers must be valid.
 */
enum SivismStatus sivism_target_dim(const struct SivismTarget *target, size_t *out);

/**
 * Unnormalised log-density at `x` of length `dim`.
 *
 * # Safety
 * `x` must hold `len` doubles; other pointers must be valid.
 */
enum SivismStatus sivism_target_log_density(const struct SivismTarget *target,
                                            const double *x,
                                            size_t len,
                                            double *out);

/**
 * Score `grad log p(x)` for `n` row-major points; `x` and `out` hold
 * `n * dim` doubles.
 *
 * # Safety
 * Buffers must hold `n * dim` doubles.
 */
enum SivismStatus sivism_target_score(const struct SivismTarget *target,
                                      const double *x,
                                      size_t n,
                                      double *out);

/**
 * Creates a training session from a run config with `"method": "sivi_sm"`.
 * The config is resolved exactly as the CLI resolves it.
 *
 * # Safety
 * `config_json` must be NUL-terminated; `out` must be valid.
 */
enum SivismStatus sivism_trainer_new(const char *config_json, struct SivismTrainer **out);

/**
 * # Safety
 * `trainer` must come from [`sivism_trainer_new`] and not be used afterwards.
 */
void sivism_trainer_free(struct SivismTrainer *trainer);

/**
 * Runs `iterations` further training iterations. Splitting a run into
 * several calls gives the same result as one call.
 *
 * # Safety
 * `trainer` must be valid.
 */
enum SivismStatus sivism_trainer_step(struct SivismTrainer *trainer, size_t iterations);

/**
 * # Safety
 * Pointers must be valid.
 */
enum SivismStatus sivism_trainer_iteration(const struct SivismTrainer *trainer, size_t *out);

/**
 * Dimension of the samples produced by [`sivism_trainer_sample`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum SivismStatus sivism_trainer_dim(const struct SivismTrainer *trainer, size_t *out);

/**
 * Draws `n` samples from the current variational distribution into `out`
 * (`n * dim` doubles, row-major) using its own stream of `seed`.
 *
 * # Safety
 * `out` must hold `n * dim` doubles.
 */
enum SivismStatus sivism_trainer_sample(const struct SivismTrainer *trainer,
                                        size_t n,
                                        uint64_t seed,
                                        double *out);

/**
 * Monte-Carlo SM loss and f-net norm over `n` fresh samples.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SivismStatus sivism_trainer_diagnostics(const struct SivismTrainer *trainer,
                                             size_t n,
                                             uint64_t seed,
                                             double *sm_loss,
                                             double *fnet_norm);

/**
 * Writes `family.json` and `fnet.json` into the existing directory `dir`.
 *
 * # Safety
 * `dir` must be NUL-terminated.
 */
enum SivismStatus sivism_trainer_save(const struct SivismTrainer *trainer, const char *dir);

/**
 * k-NN estimate of `KL(p || q)` from row-major samples of dimension `d`.
 *
 * # Safety
 * `p` holds `n * d` doubles and `q` holds `m * d`.
 */
enum SivismStatus sivism_knn_kl(const double *p,
                                size_t n,
                                const double *q,
                                size_t m,
                                size_t d,
                                size_t k,
                                double *out);

/**
 * RMSE over the upper-triangular sample-covariance entries of two sets.
 *
 * # Safety
 * `a` holds `n * d` doubles and `b` holds `m * d`.
 */
enum SivismStatus sivism_cov_rmse(const double *a,
                                  size_t n,
                                  const double *b,
                                  size_t m,
                                  size_t d,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIVISM_H */
