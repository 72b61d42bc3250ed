#include <math.h>
#include <stdio.h>
#include <string.h>

#include "mops.h"

#define EXPECT(cond)                                                        \
    do {                                                                    \
        if (!(cond)) {                                                      \
            const char *e = mops_last_error();                              \
            fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond, e ? e : ""); \
            return 1;                                                       \
        }                                                                   \
    } while (0)

int main(int argc, char **argv) {
    if (argc != 2) {
        return 2;
    }
    double p[2] = {0.5, 0.5}, q[2] = {0.9, 0.1}, out = 0.0;
    EXPECT(mops_divergence(MOPS_DIVERGENCE_TV, p, q, 2, &out) == MOPS_STATUS_OK);
    EXPECT(fabs(out - 0.4) < 1e-15);
    EXPECT(mops_divergence(MOPS_DIVERGENCE_KL, p, NULL, 2, &out) == MOPS_STATUS_NULL_POINTER);
    EXPECT(mops_last_error() != NULL);

    MopsInstance *inst = NULL;
    EXPECT(mops_instance_load(argv[1], &inst) == MOPS_STATUS_OK);
    size_t n = 0;
    EXPECT(mops_instance_class_size(inst, &n) == MOPS_STATUS_OK && n == 4);

    MopsRunParams params = {MOPS_GENERATOR_V_TYPE_UNIFORM, 1.0 / 6.0, 1.0 / 6.0, 0.1, 200, false, 7};
    MopsRun *run = NULL;
    EXPECT(mops_run(inst, &params, &run) == MOPS_STATUS_OK);
    size_t rounds = 0;
    EXPECT(mops_run_rounds(run, &rounds) == MOPS_STATUS_OK && rounds == 200);
    double regret[200];
    EXPECT(mops_run_realized_regret(run, regret, 200) == MOPS_STATUS_OK);
    for (size_t i = 0; i < 200; i++) {
        EXPECT(regret[i] >= 0.0 && regret[i] <= 1.0);
    }
    double w[4], total = 0.0;
    EXPECT(mops_run_final_weights(run, w, 3) == MOPS_STATUS_INVALID_ARGUMENT);
    EXPECT(mops_run_final_weights(run, w, 4) == MOPS_STATUS_OK);
    for (int i = 0; i < 4; i++) {
        total += w[i];
    }
    EXPECT(fabs(total - 1.0) < 1e-12);

    mops_run_free(run);
    mops_instance_free(inst);
    printf("ok %s\n", mops_version());
    return 0;
}
