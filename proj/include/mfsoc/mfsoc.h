/* Copyright 2026 The mfsoc Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the mfsoc library. Objects are opaque handles released with
 * the matching *_free call. Every fallible call returns an mfsoc_status; on
 * failure the thread-local last error names the message, module and first
 * failing index. Strings returned through char** are owned by the caller and
 * released with mfsoc_string_free.
 */

#ifndef MFSOC_MFSOC_H
#define MFSOC_MFSOC_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mfsoc_status
{
    MFSOC_OK = 0,
    MFSOC_ERR_VALIDATION = 1,
    MFSOC_ERR_DIVERGENCE = 2,
    MFSOC_ERR_USAGE = 3,
    MFSOC_ERR_IO = 4,
    MFSOC_ERR_STRUCTURE = 5,
    MFSOC_ERR_REGRESSION = 6,
    MFSOC_ERR_GRID = 7,
    MFSOC_ERR_ADMISSIBILITY = 8,
    MFSOC_ERR_SUBCLASS = 9,
    MFSOC_ERR_INTERNAL = 99
} mfsoc_status;

typedef struct mfsoc_scenario mfsoc_scenario;
typedef struct mfsoc_cc mfsoc_cc;
typedef struct mfsoc_population mfsoc_population;

const char* mfsoc_version(void);
const char* mfsoc_last_error(void);
const char* mfsoc_last_error_module(void);
long mfsoc_last_error_index(void);
void mfsoc_string_free(char* s);

/* Scenarios */
mfsoc_status mfsoc_scenario_load(const char* path, mfsoc_scenario** out);
mfsoc_status mfsoc_scenario_parse(const char* text, mfsoc_scenario** out);
void mfsoc_scenario_free(mfsoc_scenario* sc);
/* Grid step used by solvers; 0 restores the scenario's own step. A step that
 * does not divide T and the delays fails with MFSOC_ERR_GRID. */
mfsoc_status mfsoc_scenario_set_step(mfsoc_scenario* sc, double h);
mfsoc_status mfsoc_scenario_hash(const mfsoc_scenario* sc, char** out);
mfsoc_status mfsoc_scenario_canonical_json(const mfsoc_scenario* sc, char** out);
/* Assumption checks; *pass is 1 when every check holds. */
mfsoc_status mfsoc_scenario_validate(const mfsoc_scenario* sc, double r_min, int* pass, char** report);

/* Certificate; has_rho selects rho_override. */
mfsoc_status mfsoc_certify(const mfsoc_scenario* sc, int has_rho, double rho, int* pass, double* modulus,
                           char** json);
mfsoc_status mfsoc_discount_root(double c, double delta, double rhs, double* out);

/* Consistency-condition solutions */
typedef struct mfsoc_picard_options
{
    int max_iters;
    double tol;
    double rel_tol;
    double rho;
    double damping;
    int paths;
    uint64_t seed;
    int antithetic;
    int workers;
    int degree;
    double ridge;
} mfsoc_picard_options;

/* Defaults; rho is NaN, meaning the certificate's rate when the scenario
 * certifies and 0 otherwise. */
void mfsoc_picard_options_default(mfsoc_picard_options* opts);
/* On divergence *out stays null and the last error carries the residual log. */
mfsoc_status mfsoc_cc_solve(const mfsoc_scenario* sc, const mfsoc_picard_options* opts, mfsoc_cc** out);
mfsoc_status mfsoc_cc_mean_solve(const mfsoc_scenario* sc, mfsoc_cc** out);
void mfsoc_cc_free(mfsoc_cc* cc);
int mfsoc_cc_iterations(const mfsoc_cc* cc);
int mfsoc_cc_converged(const mfsoc_cc* cc);
/* Copies up to cap residuals; *count receives the total number. */
mfsoc_status mfsoc_cc_residuals(const mfsoc_cc* cc, double* buf, int cap, int* count);
mfsoc_status mfsoc_cc_meanfields_csv(const mfsoc_cc* cc, char** out);
mfsoc_status mfsoc_cc_summary_json(const mfsoc_cc* cc, char** out);
/* Per-step regression diagnostics (empty body for the mean system). */
mfsoc_status mfsoc_cc_diagnostics_csv(const mfsoc_cc* cc, char** out);
/* Binary mean-field grids in the ensemble format: xhat, uhat, then yhat and
 * zeta for each type. */
mfsoc_status mfsoc_cc_write_grids(const mfsoc_cc* cc, const char* path);

/* Realized N-agent populations under the decentralized strategy */
typedef enum mfsoc_mix_policy
{
    MFSOC_MIX_EXACT = 0,
    MFSOC_MIX_IID = 1
} mfsoc_mix_policy;

mfsoc_status mfsoc_population_simulate(const mfsoc_cc* cc, int N, mfsoc_mix_policy policy, uint64_t seed,
                                       int workers, mfsoc_population** out);
void mfsoc_population_free(mfsoc_population* pop);
double mfsoc_population_social_cost(const mfsoc_population* pop);
double mfsoc_population_mix_error(const mfsoc_population* pop);
/* sup_t squared distance of the realized averages from the mean fields. */
mfsoc_status mfsoc_population_consistency(const mfsoc_population* pop, const mfsoc_cc* cc, double* state,
                                          double* control);
mfsoc_status mfsoc_population_csv(const mfsoc_population* pop, const mfsoc_cc* cc, char** out);

/* Directional derivative of the social cost along a deterministic
 * perturbation of one agent's control (steps x d values, row-major; NULL uses
 * the constant unit-norm direction along the first control coordinate). */
mfsoc_status mfsoc_perturb(const mfsoc_cc* cc, const mfsoc_population* pop, int agent, const double* values,
                           double step, char** json);

/* Least squares of log(metric) on log(N) with a jackknife band. */
mfsoc_status mfsoc_rate_fit(const double* N, const double* metric, int count, double* slope, double* intercept,
                            double* band);

/* Oracles */
mfsoc_status mfsoc_oracle_riccati(const mfsoc_cc* cc, double* rel_l2, double* p0, double* gain0, char** csv);
/* Decentralized social cost versus the centralized optimum per draw; one row
 * per (N, seed) pair, the seeds being seed, seed+1, ..., seed+reps-1. */
mfsoc_status mfsoc_oracle_qp_gaps(const mfsoc_cc* cc, const int* N, int n_count, int reps, uint64_t seed,
                                  int workers, double* mean_gap, char** csv);

#ifdef __cplusplus
}
#endif

#endif /* MFSOC_MFSOC_H */
