#ifndef NONLOCAL_FLOW_H
#define NONLOCAL_FLOW_H

/* Generated by cbindgen at build time; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NfStatus {
  NF_STATUS_OK = 0,
  NF_STATUS_NULL_POINTER = 1,
  NF_STATUS_INVALID_UTF8 = 2,
  NF_STATUS_INVALID_CONFIG = 3,
  NF_STATUS_SOLVER_ERROR = 4,
  NF_STATUS_NOT_RUN = 5,
  NF_STATUS_OUT_OF_RANGE = 6,
  NF_STATUS_LENGTH_MISMATCH = 7,
  NF_STATUS_PANIC = 8,
} NfStatus;

/**
 * Opaque simulation handle.
 */
typedef struct NfSimulation NfSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *nf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nf_version(void);

/**
 * Parses and validates a run spec; on success `*out` owns a new handle.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum NfStatus nf_simulation_new(const char *spec_json, struct NfSimulation **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `sim` must come from [`nf_simulation_new`] and not be used afterwards.
 */
void nf_simulation_free(struct NfSimulation *sim);

/**
 * Runs the simulation to its final time, replacing any earlier result.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum NfStatus nf_simulation_run(struct NfSimulation *sim);

/**
 * Number of cells of the simulation grid.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum NfStatus nf_simulation_cell_count(const struct NfSimulation *sim, size_t *out);

/**
 * Number of recorded snapshots, including `t = 0`.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum NfStatus nf_simulation_snapshot_count(const struct NfSimulation *sim, size_t *out);

/**
 * Copies snapshot `index`: its time into `*time`, the cell averages into
 * `q` (`n_cells` values) and the interface speeds into `w` (`n_cells + 1`
 * values). `w` may be null.
 *
 * # Safety
 * `time` must be writable, `q` must hold `q_len` doubles and `w`, when not
 * null, `w_len` doubles.
 */
enum NfStatus nf_simulation_copy_snapshot(const struct NfSimulation *sim,
                                          size_t index,
                                          double *time,
                                          double *q,
                                          size_t q_len,
                                          double *w,
                                          size_t w_len);

/**
 * Diagnostics report as JSON. `options_json` may be null for the defaults.
 * The returned string must be released with [`nf_string_free`].
 *
 * # Safety
 * `sim` must be a live handle, `options_json` null or NUL-terminated, and
 * `out` writable.
 */
enum NfStatus nf_simulation_report_json(const struct NfSimulation *sim,
                                        const char *options_json,
                                        char **out);

/**
 * Releases a string returned by this library; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void nf_string_free(char *s);

/**
 * Total variation of `len >= 2` cell values, counting the
 * jumps from the `left` and `right` extension values.
 *
 * # Safety
 * `values` must hold `len` doubles and `out` be writable.
 */
enum NfStatus nf_total_variation(const double *values,
                                 size_t len,
                                 double left,
                                 double right,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NONLOCAL_FLOW_H */
