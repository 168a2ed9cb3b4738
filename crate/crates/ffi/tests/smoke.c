#include <stdio.h>
#include <stdlib.h>
#include "pmdrift.h"

static const char *SUITE =
    "schema = 1\n"
    "[[scenario]]\n"
    "id = \"c\"\n"
    "length = 1.0\n"
    "final_time = 0.005\n"
    "boundary = \"no-flux\"\n"
    "ladder = [16]\n"
    "solver = { m = 2.0 }\n"
    "measure.atoms = [{ x = [0.5, 0.5], t = 0.001, mass = 1.0 }]\n";

int main(void) {
    PmdVerdict v;
    if (pmd_classify(1.5, 2, 0.25, 0.5, false, &v) != PMD_STATUS_OK) return 1;
    if (v.plain != PMD_LEVEL_ON_LINE || !(v.theorems & PMD_PME_ADMISSIBLE)) return 2;

    PmdSuite *suite = NULL;
    if (pmd_suite_parse(SUITE, &suite) != PMD_STATUS_OK) return 3;
    PmdRun *run = NULL;
    if (pmd_run_grid(suite, NULL, 0, &run) != PMD_STATUS_OK) return 4;
    PmdRunSummary s;
    pmd_run_summary(run, &s);
    size_t need = 0;
    if (pmd_run_final_density(run, NULL, 0, &need) != PMD_STATUS_BUFFER_TOO_SMALL || need != s.cells) return 5;
    double *u = malloc(need * sizeof *u);
    pmd_run_final_density(run, u, need, &need);
    double mass = 0.0;
    for (size_t i = 0; i < need; i++) mass += u[i];
    mass /= (double)need;
    printf("%zu cells, %zu steps, mass %.15f\n", s.cells, s.steps, mass);
    free(u);
    pmd_run_free(run);
    pmd_suite_free(suite);
    return mass > 0.999999 && mass < 1.000001 ? 0 : 6;
}
