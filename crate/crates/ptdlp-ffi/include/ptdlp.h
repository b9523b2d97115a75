#ifndef PTDLP_H
#define PTDLP_H

/* Generated by cbindgen from ptdlp-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes mirroring the CLI's exit-code convention.
typedef enum PtdlpStatus {
  PTDLP_STATUS_OK = 0,
  PTDLP_STATUS_NULL_POINTER = 1,
  PTDLP_STATUS_VALIDATION_ERROR = 2,
  PTDLP_STATUS_RUNTIME_ERROR = 3,
  PTDLP_STATUS_INVALID_UTF8 = 4,
  PTDLP_STATUS_PANIC = 5,
} PtdlpStatus;

// Opaque RBM energy model.
typedef struct PtdlpRbm PtdlpRbm;

// Opaque tempered sampler over an RBM target.
typedef struct PtdlpSampler PtdlpSampler;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent error on this thread. The pointer is
// valid until the next failing call on the same thread.
const char *ptdlp_last_error_message(void);

// Library version as a static string.
const char *ptdlp_version(void);

// Runs the experiment described by a TOML config file into `out_dir`.
// `seed_override < 0` keeps the config's seed list.
//
// # Safety
// `config_path` and `out_dir` must be valid NUL-terminated strings.
enum PtdlpStatus ptdlp_run_experiment(const char *config_path,
                                      const char *out_dir,
                                      int64_t seed_override);

// Replays a manifest into `out_dir`.
//
// # Safety
// Both arguments must be valid NUL-terminated strings.
enum PtdlpStatus ptdlp_rerun_manifest(const char *manifest_path, const char *out_dir);

// Loads an RBM parameter file (JSON with `n_hidden`, `n_visible`, row-major
// `w`, `a`, `b`). Returns NULL on failure.
//
// # Safety
// `path` must be a valid NUL-terminated string. The returned handle must be
// released with [`ptdlp_rbm_free`].
struct PtdlpRbm *ptdlp_rbm_load(const char *path);

// # Safety
// `rbm` must come from [`ptdlp_rbm_load`] and not have been freed.
void ptdlp_rbm_free(struct PtdlpRbm *rbm);

// Number of visible units.
//
// # Safety
// `rbm` must be a live handle.
uintptr_t ptdlp_rbm_visible_units(const struct PtdlpRbm *rbm);

// Energy `U(θ)` of a binary state given as one byte per coordinate.
//
// # Safety
// `rbm` must be a live handle; `state` must point to `len` readable bytes;
// `out` must be writable.
enum PtdlpStatus ptdlp_rbm_energy(const struct PtdlpRbm *rbm,
                                  const uint8_t *state,
                                  uintptr_t len,
                                  double *out);

// Creates a PT-DMALA sampler with a geometric schedule of `n_chains`
// inverse temperatures from 1 down to `beta_min`, shared step size `alpha`,
// full swap intensity, and the reversible standard swap. All chains start
// from a seed-derived random state. Returns NULL on failure.
//
// # Safety
// `rbm` must be a live handle. The returned handle must be released with
// [`ptdlp_sampler_free`].
struct PtdlpSampler *ptdlp_sampler_new(const struct PtdlpRbm *rbm,
                                       uintptr_t n_chains,
                                       double beta_min,
                                       double alpha,
                                       uint64_t seed);

// # Safety
// `sampler` must come from [`ptdlp_sampler_new`] and not have been freed.
void ptdlp_sampler_free(struct PtdlpSampler *sampler);

// Advances the ensemble by `n_steps` Metropolis-adjusted steps.
//
// # Safety
// `sampler` must be a live handle.
enum PtdlpStatus ptdlp_sampler_step(struct PtdlpSampler *sampler, uintptr_t n_steps);

// Copies the β = 1 chain's state into `out` (one byte per coordinate).
//
// # Safety
// `sampler` must be a live handle; `out` must point to `len` writable bytes.
enum PtdlpStatus ptdlp_sampler_cold_state(const struct PtdlpSampler *sampler,
                                          uint8_t *out,
                                          uintptr_t len);

// Energy of the β = 1 chain's current state.
//
// # Safety
// `sampler` must be a live handle; `out` must be writable.
enum PtdlpStatus ptdlp_sampler_cold_energy(const struct PtdlpSampler *sampler, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PTDLP_H */
