#ifndef MCFDD_H
#define MCFDD_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum McfddStatus {
  MCFDD_STATUS_OK = 0,
  MCFDD_STATUS_NULL_POINTER = 1,
  MCFDD_STATUS_INVALID_ARGUMENT = 2,
  MCFDD_STATUS_PARSE_ERROR = 3,
  MCFDD_STATUS_VALIDATION_ERROR = 4,
  MCFDD_STATUS_DOMAIN_ERROR = 5,
  MCFDD_STATUS_NUMERICAL_ERROR = 6,
  MCFDD_STATUS_NOT_IDENTIFIABLE = 7,
  MCFDD_STATUS_IO_ERROR = 8,
  MCFDD_STATUS_PANIC = 9,
} McfddStatus;

/**
 * Opaque configured system.
 */
typedef struct McfddSystem McfddSystem;

typedef struct McfddDerived {
  double k_d_m;
  double k_d_i;
  double debye_length;
  double effective_charge;
  double graphene_area;
  double channel_length;
  double double_layer_capacitance;
  double quantum_capacitance;
  double gate_capacitance;
  double zeta;
  double effective_diffusion;
  double channel_area;
  double transit_time;
  double c_m0;
  double c_m1;
  double interferer_mean;
  double interferer_std;
  double flicker_variance;
} McfddDerived;

/**
 * Thresholds and analytic error probabilities. FDD fields that need the
 * two-ligand information are NaN when it is singular.
 */
typedef struct McfddAnalytic {
  double gamma_td;
  double tdd_bep;
  double gamma_fd;
  double fdd_bep;
  double fdd_var_single[2];
  double fdd_var_full[2];
} McfddAnalytic;

typedef struct McfddEstimate {
  double c_m;
  double c_i;
  double objective;
  uint32_t iterations;
  uint8_t converged;
  /**
   * 1 if the frequency-domain detector decides bit 1.
   */
  uint8_t decision;
} McfddEstimate;

typedef struct McfddBepReport {
  uint64_t trials;
  uint64_t tdd_errors;
  double tdd_bep;
  double tdd_ci_low;
  double tdd_ci_high;
  uint64_t fdd_errors;
  double fdd_bep;
  double fdd_ci_low;
  double fdd_ci_high;
  double analytic_tdd;
  /**
   * NaN when unavailable.
   */
  double analytic_fdd;
  uint64_t fdd_nonconverged;
  uint64_t master_seed;
} McfddBepReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Create a system with the default parameters.
 *
 * # Safety
 * `out` must be null or valid for writing one pointer.
 */
enum McfddStatus mcfdd_system_new_default(struct McfddSystem **out);

/**
 * Create a system from `key = value` configuration text.
 *
 * # Safety
 * `text` must be null or a NUL-terminated string; `out` must be null or
 * valid for writing one pointer.
 */
enum McfddStatus mcfdd_system_from_config(const char *text, struct McfddSystem **out);

/**
 * Create a system from a configuration file.
 *
 * # Safety
 * As for [`mcfdd_system_from_config`], with `path` a file path.
 */
enum McfddStatus mcfdd_system_from_file(const char *path, struct McfddSystem **out);

/**
 * Release a system. Null is ignored.
 *
 * # Safety
 * `system` must be null or a handle from `mcfdd_system_*` not yet freed.
 */
void mcfdd_system_free(struct McfddSystem *system);

/**
 * # Safety
 * `system` must be a live handle or null; `out` null or writable.
 */
enum McfddStatus mcfdd_derived(const struct McfddSystem *system, struct McfddDerived *out);

/**
 * Model current-noise PSD (A²/Hz) at `f` Hz for concentrations in molecules/m³.
 *
 * # Safety
 * `system` must be a live handle or null; `out` null or writable.
 */
enum McfddStatus mcfdd_total_psd(const struct McfddSystem *system,
                                 double f,
                                 double c_m,
                                 double c_i,
                                 double *out);

/**
 * # Safety
 * `system` must be a live handle or null; `out` null or writable.
 */
enum McfddStatus mcfdd_analytic(const struct McfddSystem *system, struct McfddAnalytic *out);

/**
 * Estimate `[c_m, c_i]` from `n` samples of received current (A) taken at
 * the configured sampling period, and apply the frequency-domain threshold.
 *
 * # Safety
 * `current` must be null or point to `n` readable doubles.
 */
enum McfddStatus mcfdd_estimate(const struct McfddSystem *system,
                                const double *current,
                                size_t n,
                                struct McfddEstimate *out);

/**
 * Monte Carlo error probabilities over `trials` symbols. `threads` = 0 uses
 * every core; results do not depend on it.
 *
 * # Safety
 * `system` must be a live handle or null; `out` null or writable.
 */
enum McfddStatus mcfdd_monte_carlo(const struct McfddSystem *system,
                                   size_t trials,
                                   uint64_t seed,
                                   size_t threads,
                                   struct McfddBepReport *out);

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length excluding the NUL,
 * so a caller can size the buffer with a first call using `len` = 0.
 *
 * # Safety
 * `buf` must be null or valid for writing `len` bytes.
 */
size_t mcfdd_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mcfdd_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCFDD_H */
