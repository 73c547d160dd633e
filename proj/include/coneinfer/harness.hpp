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

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "coneinfer/data_model.hpp"
#include "coneinfer/testing_power.hpp"

namespace coneinfer {

enum class Command { Fit, Test, Weights, Power, Simulate };
Command command_from_name(std::string_view name);
std::string_view command_name(Command command) noexcept;

struct RunConfig {
    Command command = Command::Fit;
    std::optional<std::string> data_path;
    std::string config_path;
    std::uint64_t seed = 0;
    std::optional<std::string> output_path;
    int parallelism = 1;
};

struct Report {
    std::string command;
    std::string inputs_digest;  // FNV-1a 64 of config, data and seed
    nlohmann::json results;
    std::string version;
    nlohmann::json timing;  // wall-clock milliseconds per phase

    nlohmann::json to_json() const;
};

const char* version() noexcept;

// Reads the config (and data) files, dispatches, and writes the report to
// output_path when one is given.
Report run(const RunConfig& config);
// Same with the configuration already parsed.
Report run_json(Command command, const nlohmann::json& config,
                const std::optional<std::string>& data_path, std::uint64_t seed, int jobs);

// Null-calibration simulation.
struct CalibrationConfig {
    GeneratorConfig generator;
    BasisKind basis = BasisKind::Exchangeable;
    LinkKind link = LinkKind::Identity;
    HypothesisSpec hypothesis;
    int replicates = 2000;
    std::vector<double> alphas{0.05};
    std::vector<double> tail_points{1.0, 2.0, 3.820, 6.0};
    WeightOptions weights;
    SolverOptions solver;
};

struct CalibrationResult {
    int replicates = 0;
    int failures = 0;
    std::vector<double> alphas;
    std::vector<long long> rejections;
    std::vector<double> rejection_rates;
    std::vector<double> tail_points;
    std::vector<double> empirical_tail;
    std::vector<double> analytic_tail;
    double max_tail_deviation = 0.0;
    double median_projection_diag = 0.0;
    std::vector<double> statistics;  // S_N per replicate, NaN on failure
};

CalibrationResult calibration_study(const CalibrationConfig& config, std::uint64_t seed, int jobs = 1);

// Parsing and serialization shared with the CLI and the tests.
HypothesisSpec parse_hypothesis(const nlohmann::json& j);
SolverOptions parse_solver(const nlohmann::json& j);
GeneratorConfig parse_generator(const nlohmann::json& j);
CalibrationConfig parse_calibration(const nlohmann::json& config);
PolyhedralCone parse_cone(const nlohmann::json& j);
nlohmann::json cone_to_json(const PolyhedralCone& cone);
nlohmann::json to_json(const QifFit& fit);
nlohmann::json to_json(const ChiBarWeights& weights);
nlohmann::json to_json(const TestResult& result);
nlohmann::json to_json(const PowerTable& table);
nlohmann::json to_json(const CalibrationResult& result);

// Unknown keys anywhere in a config raise ConfigError listing them.
void check_config_keys(const nlohmann::json& config);

std::string fnv1a_hex(std::string_view bytes);

}  // namespace coneinfer
