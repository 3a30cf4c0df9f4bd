#ifndef DPILQR_H
#define DPILQR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DpStatus {
  DP_STATUS_OK = 0,
  DP_STATUS_NULL_POINTER = 1,
  DP_STATUS_INVALID_UTF8 = 2,
  DP_STATUS_PARSE_ERROR = 3,
  DP_STATUS_VALIDATION_ERROR = 4,
  DP_STATUS_RUN_ERROR = 5,
  DP_STATUS_OUT_OF_RANGE = 6,
  DP_STATUS_BUFFER_TOO_SMALL = 7,
  DP_STATUS_PANIC = 8,
} DpStatus;

typedef enum DpPlanner {
  DP_PLANNER_CENTRALIZED = 0,
  DP_PLANNER_DISTRIBUTED = 1,
} DpPlanner;

typedef enum DpTermination {
  DP_TERMINATION_GOALS_REACHED = 0,
  DP_TERMINATION_STEP_LIMIT = 1,
  DP_TERMINATION_DIVERGED = 2,
} DpTermination;

// A parsed scenario file: scenario, solver and planner settings.
typedef struct DpScenario DpScenario;

// The result of one receding-horizon run.
typedef struct DpTrace DpTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *dp_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *dp_version(void);

// Parses a scenario from TOML text in the `dpilqr solve` file format.
//
// # Safety
// `toml_text` must be a valid NUL-terminated string and `out` a valid
// pointer to writable storage.
enum DpStatus dp_scenario_from_toml(const char *toml_text, struct DpScenario **out);

// A scenario with every setting at its default.
struct DpScenario *dp_scenario_default(void);

// # Safety
// `scenario` must be null or a handle from this library not yet freed.
void dp_scenario_free(struct DpScenario *scenario);

// # Safety
// `scenario` must be a live handle.
enum DpStatus dp_scenario_set_planner(struct DpScenario *scenario, enum DpPlanner planner);

// # Safety
// `scenario` must be a live handle.
enum DpStatus dp_scenario_set_seed(struct DpScenario *scenario, uint64_t seed);

// Sets the number of agents; explicit placements are cleared.
//
// # Safety
// `scenario` must be a live handle.
enum DpStatus dp_scenario_set_n_agents(struct DpScenario *scenario, size_t n_agents);

// # Safety
// `scenario` must be a live handle.
enum DpStatus dp_scenario_set_alpha(struct DpScenario *scenario, double alpha);

// Per-step wall-clock budget in seconds; zero or negative removes it.
//
// # Safety
// `scenario` must be a live handle.
enum DpStatus dp_scenario_set_budget(struct DpScenario *scenario, double seconds);

// Runs the scenario to completion.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
enum DpStatus dp_run(const struct DpScenario *scenario, struct DpTrace **out);

// # Safety
// `trace` must be null or a handle from this library not yet freed.
void dp_trace_free(struct DpTrace *trace);

// Number of executed steps; the trace holds one more state than steps.
//
// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum DpStatus dp_trace_n_steps(const struct DpTrace *trace, size_t *out);

// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum DpStatus dp_trace_n_agents(const struct DpTrace *trace, size_t *out);

// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum DpStatus dp_trace_state_dim(const struct DpTrace *trace, size_t agent, size_t *out);

// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum DpStatus dp_trace_control_dim(const struct DpTrace *trace, size_t agent, size_t *out);

// Copies the state of `agent` at time index `step` (0 ..= n_steps).
//
// # Safety
// `trace` must be a live handle and `buffer` valid for `len` writes.
enum DpStatus dp_trace_state(const struct DpTrace *trace,
                             size_t step,
                             size_t agent,
                             double *buffer,
                             size_t len);

// Copies the control executed by `agent` at step `step` (0 .. n_steps).
//
// # Safety
// `trace` must be a live handle and `buffer` valid for `len` writes.
enum DpStatus dp_trace_control(const struct DpTrace *trace,
                               size_t step,
                               size_t agent,
                               double *buffer,
                               size_t len);

// Final position distance of `agent` to its goal, meters.
//
// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum DpStatus dp_trace_final_distance(const struct DpTrace *trace, size_t agent, double *out);

// Smallest pairwise distance over the run, meters.
//
// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum DpStatus dp_trace_min_distance(const struct DpTrace *trace, double *out);

// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum DpStatus dp_trace_termination(const struct DpTrace *trace, enum DpTermination *out);

// The run's metrics record as JSON. Free the string with [`dp_string_free`].
//
// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum DpStatus dp_trace_metrics_json(const struct DpTrace *trace, char **out);

// # Safety
// `s` must be null or a string returned by this library not yet freed.
void dp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPILQR_H */
