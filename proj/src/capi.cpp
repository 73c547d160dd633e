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

#include "cone_infer.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "coneinfer/errors.hpp"
#include "coneinfer/harness.hpp"

using nlohmann::json;

struct ci_dataset {
    coneinfer::LongitudinalDataset data;
};
struct ci_fit {
    coneinfer::QifFit fit;
};
struct ci_weights {
    coneinfer::ChiBarWeights weights;
};

namespace {

thread_local std::string g_message;
thread_local std::string g_error_json = "null";

void set_error(const std::string& kind, const std::string& module, const std::string& message,
               const std::vector<std::string>& keys = {}) {
    g_message = message;
    g_error_json = json{{"kind", kind}, {"module", module}, {"message", message}, {"keys", keys}}.dump();
}

void clear_error() {
    g_message.clear();
    g_error_json = "null";
}

// Runs f and converts exceptions into status codes.
template <class F>
ci_status guarded(F&& f) {
    clear_error();
    try {
        f();
        return CI_OK;
    } catch (const coneinfer::ConfigError& e) {
        set_error(coneinfer::error_kind_name(e.kind()), e.module(), e.what(), e.keys());
        return CI_ERR_CONFIG;
    } catch (const coneinfer::Error& e) {
        set_error(coneinfer::error_kind_name(e.kind()), e.module(), e.what());
        return static_cast<ci_status>(e.kind());
    } catch (const json::exception& e) {
        set_error("ConfigError", "capi", e.what());
        return CI_ERR_CONFIG;
    } catch (const std::bad_alloc&) {
        set_error("InternalError", "capi", "out of memory");
        return CI_ERR_INTERNAL;
    } catch (const std::exception& e) {
        set_error("InternalError", "capi", e.what());
        return CI_ERR_INTERNAL;
    }
}

void require(bool ok, const char* what) {
    if (!ok) throw coneinfer::DomainError("capi", what);
}

char* copy_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

json parse_json(const char* text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw coneinfer::ConfigError("capi", std::string(what) + " is not valid JSON: " + e.what());
    }
}

const coneinfer::FitComponent& component(const coneinfer::QifFit& fit, int which) {
    switch (which) {
        case 0: return fit.unrestricted;
        case 1: return fit.cone;
        case 2: return fit.null;
        default: throw coneinfer::DomainError("capi", "fit component must be 0, 1 or 2");
    }
}

}  // namespace

extern "C" {

const char* ci_version(void) { return coneinfer::version(); }
const char* ci_last_error(void) { return g_message.c_str(); }
const char* ci_last_error_json(void) { return g_error_json.c_str(); }
void ci_string_free(char* s) { std::free(s); }

ci_status ci_dataset_load_csv(const char* path, ci_dataset** out) {
    return guarded([&] {
        require(path && out, "null argument");
        *out = new ci_dataset{coneinfer::load_dataset(path)};
    });
}

ci_status ci_dataset_simulate(const char* generator_json, uint64_t seed, ci_dataset** out) {
    return guarded([&] {
        require(generator_json && out, "null argument");
        const json j = parse_json(generator_json, "generator");
        *out = new ci_dataset{coneinfer::simulate_dataset(coneinfer::parse_generator(j), seed)};
    });
}

ci_status ci_dataset_write_csv(const ci_dataset* data, const char* path) {
    return guarded([&] {
        require(data && path, "null argument");
        coneinfer::write_dataset(data->data, path);
    });
}

ci_status ci_dataset_dims(const ci_dataset* data, int* n_subjects, int* n_times, int* n_covariates) {
    return guarded([&] {
        require(data, "null dataset");
        if (n_subjects) *n_subjects = data->data.n_subjects();
        if (n_times) *n_times = data->data.n_times();
        if (n_covariates) *n_covariates = data->data.n_covariates();
    });
}

void ci_dataset_free(ci_dataset* data) { delete data; }

ci_status ci_fit_run(const ci_dataset* data, const char* link, const char* basis,
                     const char* hypothesis_json, const char* solver_json, ci_fit** out) {
    return guarded([&] {
        require(data && link && basis && hypothesis_json && out, "null argument");
        const auto l = coneinfer::LinkFunction::from_name(link);
        const auto b = coneinfer::make_basis(coneinfer::basis_kind_from_name(basis), data->data.n_times());
        const json hyp = parse_json(hypothesis_json, "hypothesis");
        coneinfer::check_config_keys(json{{"hypothesis", hyp}});
        const auto spec = coneinfer::parse_hypothesis(hyp);
        coneinfer::SolverOptions solver;
        if (solver_json) {
            const json s = parse_json(solver_json, "solver");
            coneinfer::check_config_keys(json{{"solver", s}});
            solver = coneinfer::parse_solver(s);
        }
        *out = new ci_fit{coneinfer::fit_all(data->data, l, b, spec, solver)};
    });
}

ci_status ci_fit_gamma(const ci_fit* fit, int which, double* gamma, size_t len) {
    return guarded([&] {
        require(fit && gamma, "null argument");
        const auto& g = component(fit->fit, which).gamma;
        require(len >= static_cast<size_t>(g.size()), "output buffer too small");
        for (Eigen::Index i = 0; i < g.size(); ++i) gamma[i] = g(i);
    });
}

ci_status ci_fit_q(const ci_fit* fit, int which, double* q) {
    return guarded([&] {
        require(fit && q, "null argument");
        *q = component(fit->fit, which).q;
    });
}

ci_status ci_fit_to_json(const ci_fit* fit, char** out) {
    return guarded([&] {
        require(fit && out, "null argument");
        *out = copy_string(coneinfer::to_json(fit->fit).dump());
    });
}

void ci_fit_free(ci_fit* fit) { delete fit; }

ci_status ci_weights_closed_form(double phi, ci_weights** out) {
    return guarded([&] {
        require(out, "null argument");
        *out = new ci_weights{coneinfer::weights_closed_form_d2(phi)};
    });
}

ci_status ci_weights_get(const ci_weights* w, double* weights, size_t len, int* d) {
    return guarded([&] {
        require(w, "null weights");
        if (d) *d = w->weights.d;
        if (weights) {
            require(len >= static_cast<size_t>(w->weights.weights.size()), "output buffer too small");
            for (Eigen::Index k = 0; k < w->weights.weights.size(); ++k) weights[k] = w->weights.weights(k);
        }
    });
}

ci_status ci_chibar_tail(const ci_weights* w, double c, double* p) {
    return guarded([&] {
        require(w && p, "null argument");
        *p = coneinfer::chibar_tail(w->weights, c);
    });
}

ci_status ci_chibar_quantile(const ci_weights* w, double alpha, double* c) {
    return guarded([&] {
        require(w && c, "null argument");
        *c = coneinfer::chibar_quantile(w->weights, alpha);
    });
}

void ci_weights_free(ci_weights* w) { delete w; }

ci_status ci_power_lower_bound(double delta, double b, double* p) {
    return guarded([&] {
        require(p, "null argument");
        *p = coneinfer::power_lower_bound(delta, b);
    });
}

ci_status ci_power_unrestricted_exact(double delta, int df, double b1, double* p) {
    return guarded([&] {
        require(p, "null argument");
        *p = coneinfer::power_unrestricted_exact(delta, df, b1);
    });
}

ci_status ci_run(const char* command, const char* config_json, const char* data_path, uint64_t seed,
                 int jobs, char** report_json) {
    return guarded([&] {
        require(command && config_json && report_json, "null argument");
        const json config = parse_json(config_json, "config");
        const auto cmd = coneinfer::command_from_name(command);
        std::optional<std::string> data;
        if (data_path) data = data_path;
        const auto rep = coneinfer::run_json(cmd, config, data, seed, jobs);
        *report_json = copy_string(rep.to_json().dump(2));
    });
}

}  // extern "C"
