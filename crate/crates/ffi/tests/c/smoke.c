#include <stdio.h>
#include "dpilqr.h"

static const char *SCENARIO =
    "[scenario]\n"
    "n_agents = 2\n"
    "n_steps = 20\n"
    "seed = 5\n"
    "[planner]\n"
    "parallel = false\n";

int main(void) {
    DpScenario *scenario = NULL;
    if (dp_scenario_from_toml(SCENARIO, &scenario) != DP_STATUS_OK) {
        fprintf(stderr, "parse: %s\n", dp_last_error_message());
        return 1;
    }
    DpTrace *trace = NULL;
    if (dp_run(scenario, &trace) != DP_STATUS_OK) {
        fprintf(stderr, "run: %s\n", dp_last_error_message());
        return 1;
    }
    size_t steps = 0, nx = 0;
    dp_trace_n_steps(trace, &steps);
    dp_trace_state_dim(trace, 0, &nx);
    double x[4];
    if (nx != 4 || dp_trace_state(trace, steps, 0, x, 4) != DP_STATUS_OK) {
        return 1;
    }
    if (dp_trace_state(trace, steps, 0, x, 2) != DP_STATUS_BUFFER_TOO_SMALL) {
        return 1;
    }
    printf("steps=%zu x=%.6f,%.6f\n", steps, x[0], x[1]);
    dp_trace_free(trace);
    dp_scenario_free(scenario);
    return 0;
}
