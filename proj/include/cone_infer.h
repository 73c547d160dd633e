/*
 * Copyright 2026 The cone-infer Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the cone-infer library. Every function returns a ci_status;
 * on failure the message and a JSON error record are available through
 * ci_last_error / ci_last_error_json until the next call on the same thread.
 * Strings handed out by the library are released with ci_string_free. */

#ifndef CONE_INFER_H
#define CONE_INFER_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CONEINFER_BUILDING)
#    define CI_API __declspec(dllexport)
#  else
#    define CI_API __declspec(dllimport)
#  endif
#else
#  define CI_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ci_status {
    CI_OK = 0,
    CI_ERR_CONFIG = 10,
    CI_ERR_IO = 11,
    CI_ERR_PARSE = 20,
    CI_ERR_BALANCE = 21,
    CI_ERR_DUPLICATE = 22,
    CI_ERR_DIMENSION = 30,
    CI_ERR_COVARIANCE = 31,
    CI_ERR_VARIANCE = 32,
    CI_ERR_MATRIX = 33,
    CI_ERR_DOMAIN = 34,
    CI_ERR_WEIGHT = 35,
    CI_ERR_CONVERGENCE = 40,
    CI_ERR_CONSTRAINT = 41,
    CI_ERR_PROJECTION = 42,
    CI_ERR_QUADRATURE = 43,
    CI_ERR_NONCONVEX = 44,
    CI_ERR_INTERNAL = 99
} ci_status;

typedef struct ci_dataset ci_dataset;
typedef struct ci_fit ci_fit;
typedef struct ci_weights ci_weights;

CI_API const char* ci_version(void);
CI_API const char* ci_last_error(void);
/* {"kind": ..., "module": ..., "message": ..., "keys": [...]} */
CI_API const char* ci_last_error_json(void);
CI_API void ci_string_free(char* s);

/* Datasets */
CI_API ci_status ci_dataset_load_csv(const char* path, ci_dataset** out);
/* generator_json: {"gamma": [...], "correlation": ..., "rho": ..., ...} */
CI_API ci_status ci_dataset_simulate(const char* generator_json, uint64_t seed, ci_dataset** out);
CI_API ci_status ci_dataset_write_csv(const ci_dataset* data, const char* path);
CI_API ci_status ci_dataset_dims(const ci_dataset* data, int* n_subjects, int* n_times,
                                 int* n_covariates);
CI_API void ci_dataset_free(ci_dataset* data);

/* Fits. link: identity|log|logit; basis: independence|exchangeable|ar1.
 * hypothesis_json as in the "hypothesis" config block; solver_json may be NULL. */
CI_API ci_status ci_fit_run(const ci_dataset* data, const char* link, const char* basis,
                            const char* hypothesis_json, const char* solver_json, ci_fit** out);
/* which: 0 unrestricted, 1 cone, 2 null. Copies r values into gamma. */
CI_API ci_status ci_fit_gamma(const ci_fit* fit, int which, double* gamma, size_t len);
CI_API ci_status ci_fit_q(const ci_fit* fit, int which, double* q);
CI_API ci_status ci_fit_to_json(const ci_fit* fit, char** json);
CI_API void ci_fit_free(ci_fit* fit);

/* Chi-bar-squared weights; weights[k] multiplies chi^2_k. */
CI_API ci_status ci_weights_closed_form(double phi, ci_weights** out);
CI_API ci_status ci_weights_get(const ci_weights* w, double* weights, size_t len, int* d);
CI_API ci_status ci_chibar_tail(const ci_weights* w, double c, double* p);
CI_API ci_status ci_chibar_quantile(const ci_weights* w, double alpha, double* c);
CI_API void ci_weights_free(ci_weights* w);

CI_API ci_status ci_power_lower_bound(double delta, double b, double* p);
CI_API ci_status ci_power_unrestricted_exact(double delta, int df, double b1, double* p);

/* Runs a CLI command (fit|test|weights|power|simulate) and returns the
 * report JSON. data_path may be NULL for commands that take no data. */
CI_API ci_status ci_run(const char* command, const char* config_json, const char* data_path,
                        uint64_t seed, int jobs, char** report_json);

#ifdef __cplusplus
}
#endif

#endif /* CONE_INFER_H */
