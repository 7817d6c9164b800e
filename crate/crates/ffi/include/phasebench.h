#ifndef PHASEBENCH_H
#define PHASEBENCH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PbStatus {
  PB_STATUS_OK = 0,
  PB_STATUS_NULL_POINTER = 1,
  PB_STATUS_INVALID_ARGUMENT = 2,
  PB_STATUS_CONFIG = 3,
  PB_STATUS_IO = 4,
  PB_STATUS_TRUNCATION = 5,
  PB_STATUS_ALL_DIVERGED = 6,
  PB_STATUS_NOT_FOUND = 7,
  PB_STATUS_PANIC = 8,
} PbStatus;

typedef enum PbMethod {
  PB_METHOD_PPR = 0,
  PB_METHOD_TWA = 1,
} PbMethod;

/**
 * Parsed run configuration.
 */
typedef struct PbConfig PbConfig;

/**
 * In-memory ensemble results of one propagation run.
 */
typedef struct PbRun PbRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t pb_last_error(char *buf, uintptr_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pb_version(void);

/**
 * Parse a TOML configuration document.
 *
 * # Safety
 * `document` must be a NUL-terminated string; `out` must be writable.
 */
enum PbStatus pb_config_parse(const char *document, struct PbConfig **out);

/**
 * # Safety
 * `cfg` must be null or come from [`pb_config_parse`], and not be used afterwards.
 */
void pb_config_free(struct PbConfig *cfg);

/**
 * Override trajectory count (both methods), master seed and worker count.
 * Zero leaves a field unchanged.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum PbStatus pb_config_override(struct PbConfig *cfg,
                                 uint64_t trajectories,
                                 uint64_t seed,
                                 uint32_t workers);

/**
 * Run the configured propagation in memory.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum PbStatus pb_run(const struct PbConfig *cfg, struct PbRun **out);

/**
 * # Safety
 * `run` must be null or come from [`pb_run`], and not be used afterwards.
 */
void pb_run_free(struct PbRun *run);

/**
 * Number of recorded z slices for `method`.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum PbStatus pb_run_slices(const struct PbRun *run, enum PbMethod method, uintptr_t *out);

/**
 * Optimal-angle squeezing at slice `index`.
 *
 * # Safety
 * `run` must be a live handle; the four output pointers must be writable.
 */
enum PbStatus pb_run_squeezing(const struct PbRun *run,
                               enum PbMethod method,
                               uintptr_t index,
                               double *z,
                               double *theta_star,
                               double *s_min,
                               double *s_err);

/**
 * Mean photon number and its standard error at slice `index`.
 *
 * # Safety
 * `run` must be a live handle; output pointers must be writable.
 */
enum PbStatus pb_run_photon_number(const struct PbRun *run,
                                   enum PbMethod method,
                                   uintptr_t index,
                                   double *mean,
                                   double *err);

/**
 * Fraction of trajectories excluded by the divergence monitor.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum PbStatus pb_run_diverged_fraction(const struct PbRun *run, enum PbMethod method, double *out);

/**
 * Run in the configured mode and write the output files under `dir`.
 * `passed` receives 1 when quality and comparison checks passed, else 0.
 *
 * # Safety
 * `cfg` must be a live handle, `dir` a NUL-terminated path, `passed` writable.
 */
enum PbStatus pb_run_to_dir(const struct PbConfig *cfg, const char *dir, int32_t *passed);

/**
 * Exact ⟨n⟩ of the single-mode oracle (coherent α₀, ground-state atom) at `t`.
 *
 * # Safety
 * `out` must be writable.
 */
enum PbStatus pb_oracle_photon_number(double g,
                                      double gamma,
                                      double n_bar,
                                      double alpha_re,
                                      double alpha_im,
                                      double t,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PHASEBENCH_H */
