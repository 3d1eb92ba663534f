#ifndef CRAHN_H
#define CRAHN_H

/* Generated by cbindgen from crahn-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes returned by every FFI entry point.
 */
typedef enum CrahnStatus {
  CrahnStatus_Ok = 0,
  CrahnStatus_NullPointer = 1,
  CrahnStatus_InvalidUtf8 = 2,
  /*
   The configuration failed validation; details via `crahn_last_error`.
   */
  CrahnStatus_InvalidConfig = 3,
  CrahnStatus_RuntimeError = 4,
} CrahnStatus;

/*
 Opaque result handle owning a JSON document.
 */
typedef struct CrahnReport CrahnReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Last error message for this thread; empty when the last call succeeded.
 The pointer is valid until the next FFI call on the same thread.
 */
const char *crahn_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *crahn_version(void);

/*
 Runs a scenario described by a `ScenarioConfig` JSON document (missing
 fields take their defaults) and returns `{"reports": [...],
 "summary": {...}}`.

 # Safety
 `config_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CrahnStatus crahn_run_scenario_json(const char *config_json, struct CrahnReport **out);

/*
 Solves the chain over an SU-load sweep described by an `AnalyzeConfig`
 JSON document and returns the rows as a JSON array.

 # Safety
 `params_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CrahnStatus crahn_analyze_json(const char *params_json, struct CrahnReport **out);

/*
 Runs the paired sim-vs-analytic validation grids. The returned JSON
 carries per-grid maxima and the overall `pass` flag.

 # Safety
 `out` must be a valid pointer.
 */
enum CrahnStatus crahn_validate(uint64_t seed, double tolerance_pct, struct CrahnReport **out);

/*
 Borrowed pointer to the handle's JSON document; valid until
 `crahn_report_free`.

 # Safety
 `report` must be a handle produced by this library (or null).
 */
const char *crahn_report_json(const struct CrahnReport *report);

/*
 Releases a result handle. Passing null is a no-op.

 # Safety
 `report` must be a handle produced by this library, freed at most once.
 */
void crahn_report_free(struct CrahnReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CRAHN_H */
