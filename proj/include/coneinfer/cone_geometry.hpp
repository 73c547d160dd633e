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

namespace coneinfer {

// Finitely generated convex cone in R^dim, held in both descriptions:
//   generators  dim x g, the cone is {G lambda : lambda >= 0}
//   halfspaces  dim x h inward normals, the cone is {x : N^T x >= 0}
// The missing description is derived at construction by ray enumeration,
// which is only attempted for dim <= 6. Beyond that only the supplied
// description is available and asking for the other throws DimensionError.
class PolyhedralCone {
public:
    static PolyhedralCone from_generators(const Eigen::MatrixXd& generators);
    static PolyhedralCone from_halfspaces(const Eigen::MatrixXd& normals, int dim);
    static PolyhedralCone from_both(const Eigen::MatrixXd& generators,
                                    const Eigen::MatrixXd& normals);

    int dim() const noexcept { return dim_; }
    bool has_generators() const noexcept { return generators_.has_value(); }
    bool has_halfspaces() const noexcept { return halfspaces_.has_value(); }
    const Eigen::MatrixXd& generators() const;
    const Eigen::MatrixXd& halfspaces() const;

    // Membership through the halfspace description, tolerance relative to |x|.
    bool contains(const Eigen::VectorXd& x, double tol = 1e-9) const;
    // True when the cone contains no line.
    bool is_pointed() const;

private:
    PolyhedralCone() = default;
    int dim_ = 0;
    std::optional<Eigen::MatrixXd> generators_;
    std::optional<Eigen::MatrixXd> halfspaces_;
};

// Extreme rays of {x in R^dim : N^T x >= 0}, plus +/- a basis of its
// lineality space. Columns are unit vectors.
Eigen::MatrixXd enumerate_rays(const Eigen::MatrixXd& normals, int dim);

// min |A x - b| subject to x >= 0 (Lawson-Hanson active set). Columns enter
// in order of the largest dual value, lowest index first on ties.
struct NnlsResult {
    Eigen::VectorXd x;
    int pivots = 0;
};
NnlsResult nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, int max_pivots);

struct ConeProjection {
    Eigen::VectorXd point;         // P_K z
    Eigen::VectorXd coefficients;  // generator weights lambda
    std::vector<int> active;       // generators with lambda above threshold
    int face_dimension = 0;        // rank of the active generators
    int pivots = 0;
};

// argmin over x in cone of (z - x)^T M (z - x); M defaults to the identity.
ConeProjection project_cone_detailed(const Eigen::VectorXd& z, const PolyhedralCone& cone,
                                     const std::optional<Eigen::MatrixXd>& metric = std::nullopt);
Eigen::VectorXd project_cone(const Eigen::VectorXd& z, const PolyhedralCone& cone,
                             const std::optional<Eigen::MatrixXd>& metric = std::nullopt);

// Projection onto {B beta + E lambda : lambda >= 0} in the metric M. B may
// have zero columns (pure cone) and so may E (pure subspace).
Eigen::VectorXd project_subspace_cone(const Eigen::VectorXd& z, const Eigen::MatrixXd& b,
                                      const Eigen::MatrixXd& e, const Eigen::MatrixXd& metric);

// {y : <y, g> <= 0 for every generator g}.
PolyhedralCone polar_cone(const PolyhedralCone& cone);

// H0: gamma in V against H1: gamma in V + C, with V = span(null_basis) and
// C = {P u : u in N}, N generated by `cone_generators` (columns, d x g).
struct HypothesisSpec {
    int r = 0;
    int d = 0;
    Eigen::MatrixXd null_basis;        // r x (r - d)
    Eigen::MatrixXd constraint_basis;  // P, r x d
    Eigen::MatrixXd cone_generators;   // d x g
    // Set by order_cone: number of ordered means, stored first in gamma.
    std::optional<int> order_groups;

    void validate() const;
    // Generators of C in gamma coordinates (P times the generators of N).
    Eigen::MatrixXd gamma_rays() const { return constraint_basis * cone_generators; }
    PolyhedralCone n_cone() const { return PolyhedralCone::from_generators(cone_generators); }
};

// Simple order mu_1 >= ... >= mu_m over the first m coordinates, followed by
// `nuisance` unconstrained regression coefficients.
HypothesisSpec order_cone(int m, int nuisance = 0);

// Explicit hypothesis. An empty null_basis is filled with an orthonormal
// basis of the orthogonal complement of col(P).
HypothesisSpec make_hypothesis(const Eigen::MatrixXd& constraint_basis,
                               const Eigen::MatrixXd& cone_generators,
                               const Eigen::MatrixXd& null_basis = {});

// Canonical form of the hypothesis in the J-whitened coordinates, with
// L^T L = J.
struct CanonicalCone {
    Eigen::MatrixXd l_factor;             // r x r, upper triangular
    Eigen::MatrixXd p_star;               // L^{-T} P
    Eigen::MatrixXd h_matrix;             // r x d
    Eigen::MatrixXd omega;                // P^T J^{-1} P
    Eigen::MatrixXd generators_embedded;  // H v for each generator v of N
    Eigen::MatrixXd v_star_basis;         // L times the basis of V
    Eigen::MatrixXd intrinsic_basis;      // orthonormal basis of col(P_star)

    int d() const noexcept { return static_cast<int>(h_matrix.cols()); }
    // K expressed in the d coordinates of intrinsic_basis.
    PolyhedralCone intrinsic_cone() const;
};

CanonicalCone canonicalize(const HypothesisSpec& spec, const Eigen::MatrixXd& j_hat);

// Opening angle of a planar K.
double cone_angle(const CanonicalCone& canon);

struct Decomposition {
    Eigen::VectorXd v_component;
    Eigen::VectorXd perp_component;
};
// Orthogonal split of z along V_star = L V and its complement.
Decomposition decompose(const Eigen::VectorXd& z, const CanonicalCone& canon);

}  // namespace coneinfer
