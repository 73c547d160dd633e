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
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "coneinfer/cone_geometry.hpp"

namespace coneinfer {

enum class WeightSource { ClosedForm, LevelProb, MonteCarlo, Tube };
std::string_view weight_source_name(WeightSource source) noexcept;

struct GeometricConstants {
    double kappa0 = 0.0;
    double kappa2 = 0.0;
    double ell0 = 0.0;
    double ell1 = 0.0;
    double ell2 = 0.0;
    double upsilon0 = 0.0;
    double upsilon1 = 0.0;
    double tau = 0.0;
    std::vector<double> omega;  // omega[k] = volume of the unit k-sphere
    int euler_characteristic = 1;
};

// Mixture weights of a chi-bar-squared law. weights(k) multiplies chi^2_k,
// k = 0..d.
struct ChiBarWeights {
    int d = 0;
    Eigen::VectorXd weights;
    WeightSource source = WeightSource::ClosedForm;
    std::optional<Eigen::VectorXd> mc_stderr;
    std::optional<GeometricConstants> constants;
    bool critical_radius_convex = true;
};

// Volume of the unit k-sphere in R^{k+1}: 2 pi^{(k+1)/2} / Gamma((k+1)/2).
double sphere_volume(int k);

ChiBarWeights weights_closed_form_d2(double phi);

// Weighted isotonic regression onto mu_1 >= ... >= mu_m (pool adjacent
// violators). Returns the fitted vector.
Eigen::VectorXd isotonic_decreasing(const Eigen::VectorXd& z, const Eigen::VectorXd& w);
// Number of distinct level sets of the fit above.
int isotonic_levels(const Eigen::VectorXd& z, const Eigen::VectorXd& w);

enum class LevelMethod { ExactSmallM, MonteCarlo };

// Level probabilities p(k, m; Q) for the simple order with Z ~ N(0, Q), Q
// diagonal. weights(k - 1) = p(k, m; Q): k levels give chi^2_{k-1}.
ChiBarWeights level_probabilities(int m, const Eigen::MatrixXd& q, LevelMethod method,
                                  int replicates = 100000, std::uint64_t seed = 0, int jobs = 1);

// Frequencies of the face dimension of P_K Z, Z ~ N(0, I).
ChiBarWeights weights_monte_carlo(const PolyhedralCone& cone, int replicates, std::uint64_t seed,
                                  int jobs = 1);

// M = K intersected with the unit sphere for a simplicial cone K in R^d
// (d linearly independent generators). Every face is the spherical simplex
// of a subset of generators, parametrized on the unit cube by nested convex
// combinations:
//   Y_k = g_k,  Y_j = (1 - c_j) g_j + c_j Y_{j+1},  T = Y_0 / |Y_0|.
class ManifoldGeometry {
public:
    explicit ManifoldGeometry(const PolyhedralCone& cone);

    int d() const noexcept { return static_cast<int>(generators_.cols()); }
    const Eigen::MatrixXd& generators() const noexcept { return generators_; }
    int euler_characteristic() const noexcept { return 1; }

    struct Point {
        Eigen::VectorXd t;                       // T(c), unit vector
        Eigen::MatrixXd s;                       // [T_1 ... T_k]
        std::vector<Eigen::MatrixXd> second;     // second[j].col(l) = T_jl
    };
    // Patch of the face spanned by `face` (generator indices, in order) at
    // c in [0, 1]^{|face| - 1}.
    Point evaluate(const std::vector<int>& face, const Eigen::VectorXd& c,
                   bool with_second = false) const;

    Eigen::VectorXd parametrization(const Eigen::VectorXd& c) const;
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& c) const;

    // Unit normal to the face at `point`, tangent to M and pointing towards
    // the omitted generator.
    Eigen::VectorXd inward_normal(const std::vector<int>& face, int omitted,
                                  const Point& point) const;

    // All faces of codimension `codim` (generator subsets of size d - codim).
    std::vector<std::vector<int>> faces(int codim) const;

private:
    Eigen::MatrixXd generators_;
};

struct QuadratureConfig {
    int nodes = 64;
    int coarse_nodes = 32;
    double rel_tol = 1e-4;
};

// Gauss-Legendre nodes and weights on [0, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

GeometricConstants geometric_constants(const ManifoldGeometry& geom,
                                       const QuadratureConfig& quadrature = {});

ChiBarWeights weights_tube(const GeometricConstants& constants, int d);

// sum_k w_k P(chi^2_k >= c), with P(chi^2_0 >= c) = 1 at c = 0 and 0 above.
double chibar_tail(const ChiBarWeights& weights, double c);
double chibar_tail(const Eigen::VectorXd& weights, double c);
double chibar_quantile(const ChiBarWeights& weights, double alpha);
double chibar_quantile(const Eigen::VectorXd& weights, double alpha);

}  // namespace coneinfer
