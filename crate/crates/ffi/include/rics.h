#ifndef RICS_H
#define RICS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum RicsStatus {
  RICS_STATUS_OK = 0,
  RICS_STATUS_NULL_POINTER = 1,
  RICS_STATUS_INVALID_UTF8 = 2,
  RICS_STATUS_PARSE = 3,
  RICS_STATUS_CONSTRAINT = 4,
  RICS_STATUS_INFEASIBLE = 5,
  RICS_STATUS_NUMERICAL = 6,
  RICS_STATUS_IO = 7,
  RICS_STATUS_BUFFER_TOO_SMALL = 8,
  RICS_STATUS_PANIC = 9,
  RICS_STATUS_OTHER = 10,
} RicsStatus;

// Validated experiment configuration.
typedef struct RicsConfig RicsConfig;

// Outcome of a solve.
typedef struct RicsReport RicsReport;

// A scenario together with its channel realization.
typedef struct RicsScenario RicsScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string. The
// pointer stays valid until the next call into this library on the thread.
const char *rics_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *rics_version(void);

// Creates a configuration with every parameter at its default.
//
// # Safety
// `out` must be null or valid for writes.
enum RicsStatus rics_config_default(struct RicsConfig **out);

// Parses and validates a JSON configuration.
//
// # Safety
// `json` must be null or a NUL-terminated string; `out` null or valid for
// writes.
enum RicsStatus rics_config_from_json(const char *json, struct RicsConfig **out);

// # Safety
// `cfg` must be null or a handle from this library not yet freed.
void rics_config_free(struct RicsConfig *cfg);

// Draws placement, tasks and channels for one seed.
//
// # Safety
// `cfg` must be a live handle or null; `out` null or valid for writes.
enum RicsStatus rics_scenario_new(const struct RicsConfig *cfg,
                                  uint64_t seed,
                                  struct RicsScenario **out);

// Element, CV and V2V pair counts of a scenario.
//
// # Safety
// `sc` must be a live handle or null; each output null or valid for writes.
enum RicsStatus rics_scenario_dims(const struct RicsScenario *sc, size_t *l, size_t *m, size_t *n);

// # Safety
// `sc` must be null or a handle from this library not yet freed.
void rics_scenario_free(struct RicsScenario *sc);

// Runs the alternating optimizer from the default start.
//
// # Safety
// `sc` must be a live handle or null; `out` null or valid for writes.
enum RicsStatus rics_solve(const struct RicsScenario *sc, struct RicsReport **out);

// Final total safety coefficient.
//
// # Safety
// `rep` must be a live handle or null; `out` null or valid for writes.
enum RicsStatus rics_report_objective(const struct RicsReport *rep, double *out);

// Outer iterations run and whether the stop rule fired.
//
// # Safety
// `rep` must be a live handle or null; outputs null or valid for writes.
enum RicsStatus rics_report_status(const struct RicsReport *rep,
                                   size_t *iterations,
                                   bool *converged);

// Copies the objective trace into `buf`. `len` receives the trace length
// even when `cap` is too small, in which case nothing is copied.
//
// # Safety
// `buf` must be valid for `cap` writes (or null with `cap = 0`); `len` null
// or valid for writes.
enum RicsStatus rics_report_trace(const struct RicsReport *rep,
                                  double *buf,
                                  size_t cap,
                                  size_t *len);

// Serializes the full report as JSON. Release the string with
// [`rics_string_free`].
//
// # Safety
// `rep` must be a live handle or null; `out` null or valid for writes.
enum RicsStatus rics_report_to_json(const struct RicsReport *rep, char **out);

// # Safety
// `rep` must be null or a handle from this library not yet freed.
void rics_report_free(struct RicsReport *rep);

// # Safety
// `s` must be null or a string returned by this library not yet freed.
void rics_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RICS_H */
