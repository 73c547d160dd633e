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

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "coneinfer/cone_geometry.hpp"
#include "coneinfer/data_model.hpp"

namespace coneinfer {

// Extended scores at gamma. Row i of subject_scores is g_i, the s blocks
// D_i^T A_i^{-1/2} M_l A_i^{-1/2} (Y_i - mu_i) stacked in basis order.
struct ScoreState {
    Eigen::VectorXd gamma;
    Eigen::MatrixXd subject_scores;       // N x rs
    Eigen::VectorXd mean_score;           // rs
    Eigen::MatrixXd second_moment;        // rs x rs, N^{-1} sum g_i g_i^T
    Eigen::MatrixXd mean_score_jacobian;  // rs x r
    Eigen::MatrixXd marginal_variances;   // N x n
    // Per-subject jacobians d g_i / d gamma, filled on request only.
    std::vector<Eigen::MatrixXd> subject_jacobians;
};

ScoreState extended_scores(const Eigen::VectorXd& gamma, const LongitudinalDataset& data,
                           const LinkFunction& link, const CorrelationBasis& basis,
                           bool subject_jacobians = false);

// Q_N = N gbar^T C^- gbar with the symmetric pseudo-inverse of C. A positive
// ridge replaces C^- by (C + ridge I)^{-1}.
double qif_value(const ScoreState& state, double ridge = 0.0);
double qif_value(const Eigen::VectorXd& gamma, const LongitudinalDataset& data,
                 const LinkFunction& link, const CorrelationBasis& basis, double ridge = 0.0);

// Exact gradient of Q_N, including the dependence of C on gamma.
Eigen::VectorXd qif_gradient(const Eigen::VectorXd& gamma, const LongitudinalDataset& data,
                             const LinkFunction& link, const CorrelationBasis& basis,
                             double ridge = 0.0);

struct SolverOptions {
    int max_iter = 200;
    double tol = 1e-8;  // on the projected gradient of Q_N / N
    double ridge = 0.0;
    int max_halvings = 30;
    std::optional<Eigen::VectorXd> start;
};

// Feasible set {B beta + E lambda : lambda >= 0}.
struct Constraint {
    enum class Kind { Unrestricted, NullSpace, Cone };
    Kind kind = Kind::Unrestricted;
    Eigen::MatrixXd subspace;  // B (r x k); identity when unrestricted
    Eigen::MatrixXd rays;      // E (r x g); empty unless Kind::Cone

    static Constraint unrestricted(int r);
    static Constraint null_space(const HypothesisSpec& spec);
    static Constraint cone(const HypothesisSpec& spec);
};

struct FitComponent {
    Eigen::VectorXd gamma;
    double q = 0.0;
    int iterations = 0;
    double gradient_norm = 0.0;
};

// argmin of Q_N over the constraint set. Throws ConvergenceError (with the
// best iterate) when the iteration cap is reached.
FitComponent fit(const LongitudinalDataset& data, const LinkFunction& link,
                 const CorrelationBasis& basis, const Constraint& constraint,
                 const SolverOptions& options = {});

// Least-squares start point inside V under the independence basis.
Eigen::VectorXd default_start(const LongitudinalDataset& data, const LinkFunction& link,
                              const Eigen::MatrixXd& null_basis);

struct QifFit {
    FitComponent unrestricted;  // gamma_hat
    FitComponent cone;          // gamma_tilde
    FitComponent null;          // gamma_bar
    Eigen::MatrixXd j_hat;      // grad gbar^T C^- grad gbar at gamma_hat
    Eigen::MatrixXd cov_hat;    // (N J)^{-1}; pseudo-inverse if J is singular
    bool j_invertible = true;
    int n_subjects = 0;

    const Eigen::VectorXd& gamma_hat() const noexcept { return unrestricted.gamma; }
    const Eigen::VectorXd& gamma_tilde() const noexcept { return cone.gamma; }
    const Eigen::VectorXd& gamma_bar() const noexcept { return null.gamma; }
};

// The three fits plus J and the covariance estimate.
QifFit fit_all(const LongitudinalDataset& data, const LinkFunction& link,
               const CorrelationBasis& basis, const HypothesisSpec& spec,
               const SolverOptions& options = {});

// Q_N(gamma) - Q_N(gamma_hat) - N (gamma - gamma_hat)^T J (gamma - gamma_hat).
// With `frozen_weight` the weighting matrix C is held at its value at
// gamma_hat, otherwise it is re-evaluated at gamma.
double quadratic_approx_residual(const QifFit& fit, const Eigen::VectorXd& gamma,
                                 const LongitudinalDataset& data, const LinkFunction& link,
                                 const CorrelationBasis& basis, bool frozen_weight = true);

}  // namespace coneinfer
