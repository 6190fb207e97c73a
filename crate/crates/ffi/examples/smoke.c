#include <stdio.h>
#include <stdlib.h>

#include "nonlocal_flow.h"

static const char *SPEC =
    "{\"label\": \"box\", \"variant\": \"nonlocal_velocity\","
    " \"kernel\": {\"family\": \"exponential\", \"eta\": 0.1},"
    " \"velocity\": {\"family\": \"quadratic\"},"
    " \"datum\": {\"family\": \"box\", \"base\": 0.25, \"height\": 0.5, \"a\": -0.5, \"b\": 0.5},"
    " \"grid\": {\"x_min\": -2.0, \"x_max\": 2.0, \"n_cells\": 400}, \"t_end\": 0.5}";

static int check(NfStatus s, const char *what) {
    if (s != NF_STATUS_OK) {
        fprintf(stderr, "%s: status %d: %s\n", what, (int)s, nf_last_error());
        return 1;
    }
    return 0;
}

int main(void) {
    NfSimulation *sim = NULL;
    size_t n = 0, count = 0;
    if (check(nf_simulation_new(SPEC, &sim), "new")) return 1;
    if (check(nf_simulation_run(sim), "run")) return 1;
    if (check(nf_simulation_cell_count(sim, &n), "cells")) return 1;
    if (check(nf_simulation_snapshot_count(sim, &count), "snapshots")) return 1;

    double *q = malloc(n * sizeof(double));
    double t = 0.0, tv = 0.0;
    if (check(nf_simulation_copy_snapshot(sim, count - 1, &t, q, n, NULL, 0), "copy")) return 1;
    if (check(nf_total_variation(q, n, 0.25, 0.25, &tv), "tv")) return 1;

    char *report = NULL;
    if (check(nf_simulation_report_json(sim, NULL, &report), "report")) return 1;

    printf("nonlocal-flow %s\n", nf_version());
    printf("snapshots %zu, t = %g, tv = %.6f\n", count, t, tv);
    printf("report bytes %zu\n", (size_t)snprintf(NULL, 0, "%s", report));

    nf_string_free(report);
    free(q);
    nf_simulation_free(sim);
    return tv <= 1.0 + 1e-12 ? 0 : 1;
}
