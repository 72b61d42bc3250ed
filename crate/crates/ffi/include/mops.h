#ifndef MOPS_H
#define MOPS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MopsStatus {
  MOPS_STATUS_OK = 0,
  MOPS_STATUS_NULL_POINTER = 1,
  MOPS_STATUS_INVALID_ARGUMENT = 2,
  MOPS_STATUS_INVALID_UTF8 = 3,
  MOPS_STATUS_PARSE = 4,
  MOPS_STATUS_IO = 5,
  MOPS_STATUS_COMPUTATION = 6,
  MOPS_STATUS_PANIC = 7,
} MopsStatus;

typedef enum MopsDivergence {
  /**
   * `Σ (√p − √q)²`.
   */
  MOPS_DIVERGENCE_HELLINGER_SQ = 0,
  MOPS_DIVERGENCE_KL = 1,
  MOPS_DIVERGENCE_TV = 2,
} MopsDivergence;

typedef enum MopsGenerator {
  MOPS_GENERATOR_Q_TYPE = 0,
  MOPS_GENERATOR_V_TYPE_UNIFORM = 1,
  MOPS_GENERATOR_V_TYPE_DOUBLE = 2,
  MOPS_GENERATOR_V_TYPE_DESIGN = 3,
} MopsGenerator;

/**
 * A loaded tabular or mixture instance.
 */
typedef struct MopsInstance MopsInstance;

/**
 * The output of one MOPS run.
 */
typedef struct MopsRun MopsRun;

/**
 * Run parameters. A `gamma` of zero or below selects `min(0.5, √(ln|𝓜|/T))`.
 */
typedef struct MopsRunParams {
  enum MopsGenerator generator;
  double eta;
  double eta_prime;
  double gamma;
  size_t rounds;
  bool full_horizon;
  uint64_t seed;
} MopsRunParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. Valid until the next failing call
 * on the same thread.
 */
const char *mops_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mops_version(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void mops_string_free(char *s);

/**
 * Divergence between two distributions of length `len`.
 *
 * # Safety
 * `p` and `q` must point to `len` doubles; `out` must be writable.
 */
enum MopsStatus mops_divergence(enum MopsDivergence kind,
                                const double *p,
                                const double *q,
                                size_t len,
                                double *out);

/**
 * `ω(α, p₀)` for per-model radii and log prior weights. `out_epsilon` may be NULL.
 *
 * # Safety
 * `radii` and `log_prior` must point to `len` doubles; `out_value` must be writable.
 */
enum MopsStatus mops_omega(const double *radii,
                           const double *log_prior,
                           size_t len,
                           double alpha,
                           double *out_value,
                           double *out_epsilon);

/**
 * Loads an instance file written by `mops gen`. KNR instances are rejected.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MopsStatus mops_instance_load(const char *path, struct MopsInstance **out);

/**
 * Parses an instance from its JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum MopsStatus mops_instance_from_json(const char *json, struct MopsInstance **out);

/**
 * # Safety
 * `inst` must come from `mops_instance_load`/`mops_instance_from_json` or be NULL.
 */
void mops_instance_free(struct MopsInstance *inst);

/**
 * Number of models in the class.
 *
 * # Safety
 * `inst` must be a live handle; `out` must be writable.
 */
enum MopsStatus mops_instance_class_size(const struct MopsInstance *inst, size_t *out);

/**
 * Index of the true model, or -1 when the class excludes it.
 *
 * # Safety
 * `inst` must be a live handle; `out` must be writable.
 */
enum MopsStatus mops_instance_true_index(const struct MopsInstance *inst, int64_t *out);

/**
 * Largest context residual of the simulation-lemma identity at the posterior `p`.
 *
 * # Safety
 * `inst` must be a live handle; `p` must point to `len` doubles; `out` must be writable.
 */
enum MopsStatus mops_simulation_lemma_residual(const struct MopsInstance *inst,
                                               const double *p,
                                               size_t len,
                                               double *out);

/**
 * Runs MOPS on a tabular instance with a single seed.
 *
 * # Safety
 * `inst` must be a live handle; `params` must be readable; `out` must be writable.
 */
enum MopsStatus mops_run(const struct MopsInstance *inst,
                         const struct MopsRunParams *params,
                         struct MopsRun **out);

/**
 * # Safety
 * `run` must come from `mops_run` or be NULL.
 */
void mops_run_free(struct MopsRun *run);

/**
 * Number of rounds recorded.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum MopsStatus mops_run_rounds(const struct MopsRun *run, size_t *out);

/**
 * Copies per-round realized regret into `buf`, which must hold exactly the round count.
 *
 * # Safety
 * `run` must be a live handle; `buf` must point to `len` writable doubles.
 */
enum MopsStatus mops_run_realized_regret(const struct MopsRun *run, double *buf, size_t len);

/**
 * Copies the final posterior weights into `buf`, which must hold exactly the class size.
 *
 * # Safety
 * `run` must be a live handle; `buf` must point to `len` writable doubles.
 */
enum MopsStatus mops_run_final_weights(const struct MopsRun *run, double *buf, size_t len);

/**
 * Final posterior mass on the true model (NaN when the class excludes it).
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum MopsStatus mops_run_final_mass_true(const struct MopsRun *run, double *out);

/**
 * Runs the verification battery for a config file. `out_json` receives the report (free
 * with `mops_string_free`); `out_pass` whether every check passed.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; out pointers must be writable.
 */
enum MopsStatus mops_check_config(const char *config_path, char **out_json, bool *out_pass);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOPS_H */
