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
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "coneinfer/cone_geometry.hpp"
#include "coneinfer/qif_engine.hpp"
#include "coneinfer/tube_weights.hpp"

namespace coneinfer {

enum class WeightRoute { Auto, ClosedForm, LevelProb, MonteCarlo, Tube };
WeightRoute weight_route_from_name(std::string_view name);
std::string_view weight_route_name(WeightRoute route) noexcept;

struct WeightOptions {
    WeightRoute route = WeightRoute::Auto;
    int replicates = 100000;  // Monte Carlo routes
    std::uint64_t seed = 0;
    int jobs = 1;
    QuadratureConfig quadrature;
};

// Null weights for the canonical cone. Auto tries, in order: closed form
// (d = 2), level probabilities (order cones with d <= 4; exact when m <= 4),
// tube (d <= 4, simplicial), then Monte Carlo.
ChiBarWeights chibar_weights(const HypothesisSpec& spec, const CanonicalCone& canon,
                             const Eigen::MatrixXd& j_hat, const WeightOptions& options = {});

struct TestResult {
    double s_n = 0.0;       // Q(gamma_bar) - Q(gamma_tilde)
    double s_n_star = 0.0;  // Q(gamma_bar) - Q(gamma_hat)
    double p_value = 1.0;
    double alpha = 0.05;
    double critical_value = 0.0;
    ChiBarWeights weights_used;
    QifFit fit;
    CanonicalCone canon;
    double projection_diag = 0.0;
    bool projection_warning = false;
};

TestResult run_test(const LongitudinalDataset& data, const LinkFunction& link,
                    const CorrelationBasis& basis, const HypothesisSpec& spec, double alpha,
                    const WeightOptions& weights = {}, const SolverOptions& solver = {});

// 1 - Phi(sqrt(b) - delta)
double power_lower_bound(double delta, double b);

// P(chi^2_df(delta^2) >= b1) as a Poisson(delta^2 / 2) mixture of central tails.
double power_unrestricted_exact(double delta, int df, double b1);

struct PowerSpec {
    double delta = 0.0;
    int df = 2;
    double b1 = 5.991;
    double b2 = 3.820;
    Eigen::VectorXd u_star;
};

// |H u_star|; u_star must lie in N.
double noncentrality(const CanonicalCone& canon, const HypothesisSpec& spec,
                     const Eigen::VectorXd& u_star);
PowerSpec make_power_spec(const CanonicalCone& canon, const HypothesisSpec& spec,
                          const Eigen::VectorXd& u_star, int df, double b1, double b2);

struct PowerTable {
    std::vector<double> delta;
    std::vector<double> restricted_lower;    // S_N lower bound, critical value b2
    std::vector<double> unrestricted_exact;  // S_N* exact
    std::vector<double> unrestricted_lower;  // S_N* lower bound, critical value b1
    double b1 = 5.991;
    double b2 = 3.820;
    int df = 2;
};

PowerTable reproduce_table1(const std::vector<double>& delta_grid = {0, 1, 2, 3, 4, 5},
                            double b1 = 5.991, double b2 = 3.820, int df = 2);
std::string format_power_table(const PowerTable& table);

}  // namespace coneinfer
