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

// cone-infer command-line front end. Talks to the library only through the
// C interface.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cone_infer.h"

using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code(ci_status status) {
    switch (status) {
        case CI_OK: return 0;
        case CI_ERR_CONFIG: return kExitConfig;
        case CI_ERR_IO:
        case CI_ERR_PARSE:
        case CI_ERR_BALANCE:
        case CI_ERR_DUPLICATE:
        case CI_ERR_DIMENSION: return kExitData;
        default: return kExitNumeric;
    }
}

int fail(int code, const std::string& kind, const std::string& message) {
    std::cerr << json{{"error", {{"kind", kind}, {"module", "cli"}, {"message", message}}}}.dump() << "\n";
    return code;
}

int default_jobs() {
    if (const char* env = std::getenv("CONE_INFER_JOBS")) {
        try {
            return std::max(1, std::stoi(env));
        } catch (const std::exception&) {
        }
    }
    return 1;
}

struct Options {
    std::string config_path;
    std::optional<std::string> data_path;
    std::uint64_t seed = 0;
    std::optional<std::string> out_path;
    int jobs = 1;
    std::optional<double> alpha;
    std::optional<std::string> weights;
    std::optional<std::vector<double>> delta_grid;
    std::optional<double> b1, b2;
    std::optional<int> df;
};

void add_common(CLI::App* sub, Options& o, bool data) {
    sub->add_option("--config", o.config_path, "JSON config file")->required();
    if (data) sub->add_option("--data", o.data_path, "CSV data file");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--out", o.out_path, "write the report here instead of stdout");
    sub->add_option("--jobs", o.jobs, "worker threads (default: $CONE_INFER_JOBS or 1)");
}

void apply_overrides(json& config, const Options& o) {
    if (o.alpha) config["alpha"] = *o.alpha;
    if (o.weights) {
        if (!config.contains("weights") || !config["weights"].is_object()) config["weights"] = json::object();
        config["weights"]["route"] = *o.weights;
    }
    auto power = [&]() -> json& {
        if (!config.contains("power") || !config["power"].is_object()) config["power"] = json::object();
        return config["power"];
    };
    if (o.delta_grid) power()["delta_grid"] = *o.delta_grid;
    if (o.b1) power()["b1"] = *o.b1;
    if (o.b2) power()["b2"] = *o.b2;
    if (o.df) power()["df"] = *o.df;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cone-restricted hypothesis tests for longitudinal QIF models"};
    app.set_version_flag("--version", std::string(ci_version()));
    app.require_subcommand(1);

    Options o;
    o.jobs = default_jobs();

    auto* fit = app.add_subcommand("fit", "fit unrestricted, cone and null models");
    add_common(fit, o, true);

    auto* test = app.add_subcommand("test", "run the cone-restricted QIF test");
    add_common(test, o, true);
    test->add_option("--alpha", o.alpha, "significance level");
    test->add_option("--weights", o.weights, "weight route")
        ->check(CLI::IsMember({"auto", "closed", "level", "tube", "mc"}));

    auto* weights = app.add_subcommand("weights", "compute chi-bar-squared weights");
    add_common(weights, o, false);
    weights->add_option("--weights", o.weights, "weight route")
        ->check(CLI::IsMember({"auto", "closed", "level", "tube", "mc"}));

    auto* power = app.add_subcommand("power", "power table for the restricted and unrestricted tests");
    add_common(power, o, false);
    power->add_option("--delta-grid", o.delta_grid, "noncentrality values")->delimiter(',');
    power->add_option("--b1", o.b1, "critical value of the unrestricted test");
    power->add_option("--b2", o.b2, "critical value of the restricted test");
    power->add_option("--df", o.df, "degrees of freedom of the unrestricted test");

    auto* simulate = app.add_subcommand("simulate", "calibration study under the null");
    add_common(simulate, o, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    const std::string command = app.get_subcommands().front()->get_name();

    std::ifstream in(o.config_path);
    if (!in) return fail(kExitConfig, "IoError", "cannot read config '" + o.config_path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    json config;
    try {
        config = json::parse(buf.str());
    } catch (const json::exception& e) {
        return fail(kExitConfig, "ConfigError", std::string("config is not valid JSON: ") + e.what());
    }
    if (!config.is_object()) return fail(kExitConfig, "ConfigError", "config must be a JSON object");
    apply_overrides(config, o);

    char* report = nullptr;
    const ci_status status = ci_run(command.c_str(), config.dump().c_str(),
                                    o.data_path ? o.data_path->c_str() : nullptr, o.seed, o.jobs, &report);
    if (status != CI_OK) {
        std::cerr << "{\"error\":" << ci_last_error_json() << "}\n";
        return exit_code(status);
    }
    const std::string text(report);
    ci_string_free(report);

    if (o.out_path) {
        std::ofstream out(*o.out_path);
        if (!out) return fail(kExitData, "IoError", "cannot write '" + *o.out_path + "'");
        out << text << "\n";
        if (command == "power") {
            // aligned table for eyeballing
            const json rep = json::parse(text);
            if (rep["results"].contains("text")) std::cout << rep["results"]["text"].get<std::string>();
        }
    } else {
        std::cout << text << "\n";
    }
    return 0;
}
