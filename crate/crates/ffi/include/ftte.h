/* Generated by cbindgen. Do not edit. */

#ifndef FTTE_H
#define FTTE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum FtteStatus {
  FTTE_STATUS_OK = 0,
  FTTE_STATUS_NULL_POINTER = 1,
  FTTE_STATUS_INVALID_UTF8 = 2,
  FTTE_STATUS_CONFIG = 3,
  FTTE_STATUS_IO = 4,
  FTTE_STATUS_INFEASIBLE_BUDGET = 5,
  FTTE_STATUS_INFEASIBLE_PARTITION = 6,
  FTTE_STATUS_OUT_OF_RANGE = 7,
  FTTE_STATUS_SIMULATION = 8,
  FTTE_STATUS_PANIC = 9,
} FtteStatus;

// Trace event kinds, matching the `event` column of the trace CSV.
typedef enum FtteEvent {
  FTTE_EVENT_DISPATCH = 0,
  FTTE_EVENT_CLIENT_FINISHED = 1,
  FTTE_EVENT_AGGREGATION = 2,
  FTTE_EVENT_EVAL = 3,
} FtteEvent;

// A validated experiment configuration.
typedef struct FtteExperiment FtteExperiment;

// The trace and summary of one simulated repeat.
typedef struct FtteRun FtteRun;

// Headline numbers of a finished run.
typedef struct FtteRunMetrics {
  bool reached;
  bool oscillating;
  // Step at which the target was first met; 0 when not reached.
  uint64_t steps_to_target;
  // Simulated seconds at that step; NaN when not reached.
  double sim_time_to_target_s;
  uint64_t final_step;
  double final_sim_time_s;
  // Accuracy at the last evaluation; NaN if none ran.
  double final_accuracy;
  uint64_t aggregations;
  uint64_t upload_bytes;
  uint64_t download_bytes;
} FtteRunMetrics;

// One trace row. `accuracy` and `loss` are NaN unless `event` is `Eval`.
typedef struct FtteTraceRecord {
  uint64_t step;
  double sim_time_s;
  enum FtteEvent event;
  uint64_t version;
  double accuracy;
  double loss;
  uint64_t upload_bytes_cum;
  uint64_t download_bytes_cum;
} FtteTraceRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL after a success.
// The pointer stays valid until the next `ftte_*` call on the same thread.
const char *ftte_last_error(void);

// Library version as a static NUL-terminated string.
const char *ftte_version(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from an `ftte_*` function and not have been freed.
void ftte_string_free(char *s);

// FTTE staleness weight `1 / (1 + age * variance)`.
double ftte_staleness_weight(uint64_t age, double variance);

// Parses and validates a JSON experiment configuration.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum FtteStatus ftte_experiment_from_json(const char *json, struct FtteExperiment **out);

// Reads a JSON experiment configuration from `path`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum FtteStatus ftte_experiment_load(const char *path, struct FtteExperiment **out);

// Applies a dotted `key=value` override, e.g. `"dataset.dim=8"`. The
// experiment is left unchanged if the result does not validate.
//
// # Safety
// `exp` must be a live handle; `assignment` a NUL-terminated string.
enum FtteStatus ftte_experiment_set(struct FtteExperiment *exp, const char *assignment);

// Resolved configuration as pretty JSON.
//
// # Safety
// `exp` must be a live handle; `out` must be writable.
enum FtteStatus ftte_experiment_to_json(const struct FtteExperiment *exp, char **out);

// Number of repeats configured, or 0 for a NULL handle.
//
// # Safety
// `exp` must be NULL or a live handle.
size_t ftte_experiment_repeats(const struct FtteExperiment *exp);

// # Safety
// `exp` must be NULL or a handle not yet freed.
void ftte_experiment_free(struct FtteExperiment *exp);

// Simulates repeat `repeat` in memory. Nothing is written to disk.
//
// # Safety
// `exp` must be a live handle; `out` must be writable.
enum FtteStatus ftte_run(const struct FtteExperiment *exp, size_t repeat, struct FtteRun **out);

// # Safety
// `run` must be a live handle; `out` must be writable.
enum FtteStatus ftte_run_metrics(const struct FtteRun *run, struct FtteRunMetrics *out);

// Number of trace rows, or 0 for a NULL handle.
//
// # Safety
// `run` must be NULL or a live handle.
size_t ftte_run_trace_len(const struct FtteRun *run);

// # Safety
// `run` must be a live handle; `out` must be writable.
enum FtteStatus ftte_run_trace_record(const struct FtteRun *run,
                                      size_t index,
                                      struct FtteTraceRecord *out);

// Trace in the same CSV form the CLI writes.
//
// # Safety
// `run` must be a live handle; `out` must be writable.
enum FtteStatus ftte_run_trace_csv(const struct FtteRun *run, char **out);

// Run summary as JSON, one entry of the CLI's `summary.json` `runs` array.
//
// # Safety
// `run` must be a live handle; `out` must be writable.
enum FtteStatus ftte_run_summary_json(const struct FtteRun *run, char **out);

// # Safety
// `run` must be NULL or a handle not yet freed.
void ftte_run_free(struct FtteRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FTTE_H */
