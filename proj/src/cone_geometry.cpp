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

#include "coneinfer/cone_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "coneinfer/errors.hpp"
#include "coneinfer/linalg.hpp"

namespace coneinfer {

namespace {

constexpr const char* kModule = "cone_geometry";
constexpr int kMaxEnumerationDim = 6;
constexpr double kActivity = 1e-9;

Eigen::MatrixXd normalize_columns(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out(m.rows(), 0);
    const double top = m.size() ? m.colwise().norm().maxCoeff() : 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double n = m.col(j).norm();
        if (n <= 1e-14 * top || n == 0.0) continue;
        out.conservativeResize(Eigen::NoChange, out.cols() + 1);
        out.col(out.cols() - 1) = m.col(j) / n;
    }
    return out;
}

bool already_listed(const std::vector<Eigen::VectorXd>& rays, const Eigen::VectorXd& v) {
    return std::any_of(rays.begin(), rays.end(),
                       [&](const Eigen::VectorXd& w) { return w.dot(v) > 1.0 - 1e-9; });
}

double binomial(int n, int k) {
    double out = 1.0;
    for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
    return out;
}

// Upper-triangular R with R^T R = metric.
Eigen::MatrixXd whitening(const Eigen::MatrixXd& metric) {
    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (metric + metric.transpose()));
    if (llt.info() != Eigen::Success)
        throw MatrixError(kModule, "projection metric is not positive definite");
    return llt.matrixU();
}

}  // namespace

Eigen::MatrixXd enumerate_rays(const Eigen::MatrixXd& normals_in, int dim) {
    if (normals_in.rows() != dim && normals_in.cols() > 0)
        throw DimensionError(kModule, "halfspace normals do not match cone dimension");
    const Eigen::MatrixXd normals = normalize_columns(normals_in);
    const int h = static_cast<int>(normals.cols());

    const Eigen::MatrixXd lineality =
        h == 0 ? Eigen::MatrixXd::Identity(dim, dim) : linalg::null_space(normals.transpose());
    const Eigen::MatrixXd w = lineality.cols() == 0 ? Eigen::MatrixXd::Identity(dim, dim)
                                                    : linalg::null_space(lineality.transpose());
    const int k = static_cast<int>(w.cols());
    const Eigen::MatrixXd nw = w.transpose() * normals;
    constexpr double tol = 1e-10;

    std::vector<Eigen::VectorXd> rays;
    auto feasible = [&](const Eigen::VectorXd& y) {
        return h == 0 || (nw.transpose() * y).minCoeff() >= -tol;
    };
    if (k == 1) {
        for (double s : {1.0, -1.0}) {
            Eigen::VectorXd y = Eigen::VectorXd::Constant(1, s);
            if (feasible(y)) rays.push_back(y);
        }
    } else if (k >= 2) {
        if (binomial(h, k - 1) > 5e6)
            throw DimensionError(kModule, "too many halfspaces for ray enumeration");
        std::vector<int> subset(k - 1);
        for (int i = 0; i < k - 1; ++i) subset[i] = i;
        while (k - 1 <= h) {
            Eigen::MatrixXd rows(k - 1, k);
            for (int i = 0; i < k - 1; ++i) rows.row(i) = nw.col(subset[i]).transpose();
            const Eigen::MatrixXd ns = linalg::null_space(rows);
            if (ns.cols() == 1) {
                for (double s : {1.0, -1.0}) {
                    Eigen::VectorXd y = s * ns.col(0).normalized();
                    if (feasible(y) && !already_listed(rays, y)) rays.push_back(y);
                }
            }
            int pos = k - 2;
            while (pos >= 0 && subset[pos] == h - (k - 1) + pos) --pos;
            if (pos < 0) break;
            ++subset[pos];
            for (int i = pos + 1; i < k - 1; ++i) subset[i] = subset[i - 1] + 1;
        }
    }

    Eigen::MatrixXd out(dim, static_cast<Eigen::Index>(rays.size() + 2 * lineality.cols()));
    Eigen::Index c = 0;
    for (const auto& y : rays) out.col(c++) = (w * y).normalized();
    for (Eigen::Index j = 0; j < lineality.cols(); ++j) {
        out.col(c++) = lineality.col(j);
        out.col(c++) = -lineality.col(j);
    }
    return out;
}

PolyhedralCone PolyhedralCone::from_generators(const Eigen::MatrixXd& generators) {
    PolyhedralCone cone;
    cone.dim_ = static_cast<int>(generators.rows());
    if (cone.dim_ < 1) throw DimensionError(kModule, "cone dimension must be positive");
    cone.generators_ = normalize_columns(generators);
    if (cone.dim_ <= kMaxEnumerationDim)
        cone.halfspaces_ = -enumerate_rays(-*cone.generators_, cone.dim_);
    return cone;
}

PolyhedralCone PolyhedralCone::from_halfspaces(const Eigen::MatrixXd& normals, int dim) {
    PolyhedralCone cone;
    cone.dim_ = dim;
    if (dim < 1) throw DimensionError(kModule, "cone dimension must be positive");
    if (normals.cols() > 0 && normals.rows() != dim)
        throw DimensionError(kModule, "halfspace normals do not match cone dimension");
    cone.halfspaces_ = normals.cols() > 0 ? normalize_columns(normals) : Eigen::MatrixXd(dim, 0);
    if (dim <= kMaxEnumerationDim) cone.generators_ = enumerate_rays(*cone.halfspaces_, dim);
    return cone;
}

PolyhedralCone PolyhedralCone::from_both(const Eigen::MatrixXd& generators,
                                         const Eigen::MatrixXd& normals) {
    PolyhedralCone cone;
    cone.dim_ = static_cast<int>(generators.rows());
    if (normals.cols() > 0 && normals.rows() != generators.rows())
        throw DimensionError(kModule, "generator and halfspace dimensions differ");
    cone.generators_ = normalize_columns(generators);
    cone.halfspaces_ = normals.cols() > 0 ? normalize_columns(normals)
                                          : Eigen::MatrixXd(cone.dim_, 0);
    return cone;
}

const Eigen::MatrixXd& PolyhedralCone::generators() const {
    if (!generators_)
        throw DimensionError(kModule, "generator description unavailable above dimension 6");
    return *generators_;
}

const Eigen::MatrixXd& PolyhedralCone::halfspaces() const {
    if (!halfspaces_)
        throw DimensionError(kModule, "halfspace description unavailable above dimension 6");
    return *halfspaces_;
}

bool PolyhedralCone::contains(const Eigen::VectorXd& x, double tol) const {
    if (x.size() != dim_) throw DimensionError(kModule, "point dimension mismatch");
    const double scale = x.norm();
    if (halfspaces_) {
        if (halfspaces_->cols() == 0) return true;
        return (halfspaces_->transpose() * x).minCoeff() >= -tol * scale;
    }
    const Eigen::VectorXd p = project_cone(x, *this);
    return (p - x).norm() <= tol * std::max(scale, 1e-300);
}

bool PolyhedralCone::is_pointed() const {
    if (!generators_) return linalg::rank(halfspaces()) == dim_;
    const Eigen::MatrixXd& g = *generators_;
    for (Eigen::Index k = 0; k < g.cols(); ++k) {
        const Eigen::VectorXd target = -g.col(k);
        if ((project_cone(target, *this) - target).norm() < 1e-9) return false;
    }
    return true;
}

NnlsResult nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, int max_pivots) {
    const Eigen::Index m = a.cols();
    NnlsResult res;
    res.x = Eigen::VectorXd::Zero(m);
    if (m == 0) return res;
    const double tol = 1e-13 * std::max(a.norm() * b.norm(), 1e-300);
    std::vector<char> in_p(m, 0), blocked(m, 0);
    Eigen::VectorXd w = a.transpose() * b;

    auto solve_passive = [&]() {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index k = 0; k < m; ++k)
            if (in_p[k]) idx.push_back(k);
        Eigen::MatrixXd ap(a.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t c = 0; c < idx.size(); ++c) ap.col(c) = a.col(idx[c]);
        const Eigen::VectorXd sp = ap.colPivHouseholderQr().solve(b);
        Eigen::VectorXd s = Eigen::VectorXd::Zero(m);
        for (std::size_t c = 0; c < idx.size(); ++c) s(idx[c]) = sp(c);
        return s;
    };

    while (true) {
        Eigen::Index j = -1;
        double best = tol;
        for (Eigen::Index k = 0; k < m; ++k)
            if (!in_p[k] && !blocked[k] && w(k) > best) {
                best = w(k);
                j = k;
            }
        if (j < 0) break;
        in_p[j] = 1;
        bool first = true;
        while (true) {
            if (++res.pivots > max_pivots)
                throw ProjectionError(kModule, "active-set projection exceeded " +
                                                   std::to_string(max_pivots) + " pivots");
            const Eigen::VectorXd s = solve_passive();
            if (first && s(j) <= 0.0) {
                // Entering column cannot move: numerically tied at the boundary.
                in_p[j] = 0;
                blocked[j] = 1;
                break;
            }
            first = false;
            bool positive = true;
            for (Eigen::Index k = 0; k < m; ++k)
                if (in_p[k] && s(k) <= 0.0) positive = false;
            if (positive) {
                res.x = s;
                std::fill(blocked.begin(), blocked.end(), 0);
                break;
            }
            double alpha = 1.0;
            for (Eigen::Index k = 0; k < m; ++k)
                if (in_p[k] && s(k) <= 0.0) alpha = std::min(alpha, res.x(k) / (res.x(k) - s(k)));
            res.x += alpha * (s - res.x);
            for (Eigen::Index k = 0; k < m; ++k)
                if (in_p[k] && res.x(k) <= 1e-15 * std::max(1.0, res.x.cwiseAbs().maxCoeff())) {
                    in_p[k] = 0;
                    res.x(k) = 0.0;
                }
        }
        w = a.transpose() * (b - a * res.x);
    }
    return res;
}

ConeProjection project_cone_detailed(const Eigen::VectorXd& z, const PolyhedralCone& cone,
                                     const std::optional<Eigen::MatrixXd>& metric) {
    if (z.size() != cone.dim()) throw DimensionError(kModule, "point dimension mismatch");
    const Eigen::MatrixXd& g = cone.generators();
    Eigen::MatrixXd a = g;
    Eigen::VectorXd b = z;
    if (metric) {
        if (metric->rows() != cone.dim() || metric->cols() != cone.dim())
            throw DimensionError(kModule, "metric dimension mismatch");
        const Eigen::MatrixXd r = whitening(*metric);
        a = r * g;
        b = r * z;
    }
    const int cap = 50 * std::max<int>(cone.dim(), static_cast<int>(g.cols()));
    NnlsResult sol = nnls(a, b, cap);

    ConeProjection out;
    out.coefficients = sol.x;
    out.point = g * sol.x;
    out.pivots = sol.pivots;
    const double scale = std::max(b.norm(), 1e-300);
    for (Eigen::Index k = 0; k < g.cols(); ++k)
        if (sol.x(k) * a.col(k).norm() > kActivity * scale) out.active.push_back(static_cast<int>(k));
    Eigen::MatrixXd act(g.rows(), static_cast<Eigen::Index>(out.active.size()));
    for (std::size_t c = 0; c < out.active.size(); ++c) act.col(c) = g.col(out.active[c]);
    out.face_dimension = linalg::rank(act);
    return out;
}

Eigen::VectorXd project_cone(const Eigen::VectorXd& z, const PolyhedralCone& cone,
                             const std::optional<Eigen::MatrixXd>& metric) {
    return project_cone_detailed(z, cone, metric).point;
}

Eigen::VectorXd project_subspace_cone(const Eigen::VectorXd& z, const Eigen::MatrixXd& b,
                                      const Eigen::MatrixXd& e, const Eigen::MatrixXd& metric) {
    const Eigen::Index dim = z.size();
    if (metric.rows() != dim || (b.cols() > 0 && b.rows() != dim) || (e.cols() > 0 && e.rows() != dim))
        throw DimensionError(kModule, "projection operands have mismatched dimensions");
    const Eigen::MatrixXd r = whitening(metric);
    const Eigen::VectorXd rz = r * z;
    Eigen::MatrixXd ab = b.cols() ? Eigen::MatrixXd(r * b) : Eigen::MatrixXd(dim, 0);
    Eigen::MatrixXd pi = Eigen::MatrixXd::Identity(dim, dim);
    if (ab.cols() > 0) pi -= linalg::projector(ab);

    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(e.cols());
    if (e.cols() > 0) {
        const Eigen::MatrixXd ae = pi * (r * e);
        lambda = nnls(ae, pi * rz, 50 * std::max<int>(static_cast<int>(dim), static_cast<int>(e.cols()))).x;
    }
    Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
    if (e.cols() > 0) x += e * lambda;
    if (ab.cols() > 0) {
        const Eigen::VectorXd rest = rz - (e.cols() > 0 ? Eigen::VectorXd(r * e * lambda)
                                                        : Eigen::VectorXd::Zero(dim));
        x += b * ab.colPivHouseholderQr().solve(rest);
    }
    return x;
}

PolyhedralCone polar_cone(const PolyhedralCone& cone) {
    const Eigen::MatrixXd& g = cone.generators();
    if (cone.has_halfspaces()) return PolyhedralCone::from_both(-cone.halfspaces(), -g);
    return PolyhedralCone::from_halfspaces(-g, cone.dim());
}

void HypothesisSpec::validate() const {
    const auto& p = constraint_basis;
    if (r < 1 || p.rows() != r) throw DimensionError(kModule, "constraint basis must have r rows");
    if (d < 1 || p.cols() != d || d > r)
        throw DimensionError(kModule, "constraint basis must have d columns with 1 <= d <= r");
    if (linalg::rank(p) != d)
        throw DimensionError(kModule, "constraint basis is not of full column rank");
    if (null_basis.rows() != r || null_basis.cols() != r - d)
        throw DimensionError(kModule, "null basis must be r x (r - d)");
    if (null_basis.cols() > 0) {
        if (linalg::rank(null_basis) != r - d)
            throw DimensionError(kModule, "null basis is not of full column rank");
        const double cross = (p.transpose() * null_basis).norm();
        if (cross > 1e-10 * std::max(1.0, p.norm() * null_basis.norm()))
            throw DimensionError(kModule, "null basis is not orthogonal to the constraint basis");
    }
    if (cone_generators.rows() != d)
        throw DimensionError(kModule, "cone generators must be d-vectors");
    if (cone_generators.cols() < 1) throw ConstraintError(kModule, "cone has no generators");
    for (Eigen::Index k = 0; k < cone_generators.cols(); ++k)
        if (!(cone_generators.col(k).norm() > 0.0) || !cone_generators.col(k).allFinite())
            throw ConstraintError(kModule, "cone generator " + std::to_string(k) + " is zero or non-finite");
    if (order_groups && (*order_groups != d + 1 || *order_groups > r))
        throw DimensionError(kModule, "order cone metadata inconsistent with d");
}

HypothesisSpec order_cone(int m, int nuisance) {
    if (m < 2) throw DimensionError(kModule, "order cone needs at least two groups");
    if (nuisance < 0) throw DimensionError(kModule, "negative nuisance dimension");
    HypothesisSpec spec;
    spec.r = m + nuisance;
    spec.d = m - 1;
    spec.order_groups = m;
    spec.constraint_basis = Eigen::MatrixXd::Zero(spec.r, spec.d);
    for (int k = 1; k <= spec.d; ++k) {
        spec.constraint_basis.col(k - 1).head(k).setOnes();
        spec.constraint_basis(k, k - 1) = -k;
    }
    spec.null_basis = Eigen::MatrixXd::Zero(spec.r, spec.r - spec.d);
    spec.null_basis.col(0).head(m).setConstant(1.0 / std::sqrt(static_cast<double>(m)));
    for (int j = 0; j < nuisance; ++j) spec.null_basis(m + j, 1 + j) = 1.0;

    // Rows a_t give the successive differences mu_t - mu_{t+1} of P u; N is
    // {u : A u >= 0} so its extreme rays are the columns of A^{-1}.
    Eigen::MatrixXd a(spec.d, spec.d);
    for (int t = 0; t < spec.d; ++t)
        a.row(t) = spec.constraint_basis.row(t) - spec.constraint_basis.row(t + 1);
    Eigen::MatrixXd gens = a.inverse();
    for (Eigen::Index k = 0; k < gens.cols(); ++k) {
        for (Eigen::Index i = 0; i < gens.rows(); ++i)
            if (std::abs(gens(i, k)) > 1e-12) {
                gens.col(k) /= std::abs(gens(i, k));
                break;
            }
        for (Eigen::Index i = 0; i < gens.rows(); ++i)
            if (std::abs(gens(i, k)) < 1e-14) gens(i, k) = 0.0;
    }
    spec.cone_generators = gens;
    spec.validate();
    return spec;
}

HypothesisSpec make_hypothesis(const Eigen::MatrixXd& constraint_basis,
                               const Eigen::MatrixXd& cone_generators,
                               const Eigen::MatrixXd& null_basis) {
    HypothesisSpec spec;
    spec.r = static_cast<int>(constraint_basis.rows());
    spec.d = static_cast<int>(constraint_basis.cols());
    spec.constraint_basis = constraint_basis;
    spec.cone_generators = cone_generators;
    spec.null_basis = null_basis.size() ? null_basis : linalg::null_space(constraint_basis.transpose());
    if (spec.null_basis.rows() == 0) spec.null_basis = Eigen::MatrixXd(spec.r, 0);
    spec.validate();
    return spec;
}

PolyhedralCone CanonicalCone::intrinsic_cone() const {
    return PolyhedralCone::from_generators(intrinsic_basis.transpose() * generators_embedded);
}

CanonicalCone canonicalize(const HypothesisSpec& spec, const Eigen::MatrixXd& j_hat) {
    spec.validate();
    if (j_hat.rows() != spec.r || j_hat.cols() != spec.r)
        throw DimensionError(kModule, "information matrix must be r x r");
    if (!j_hat.allFinite()) throw MatrixError(kModule, "information matrix has non-finite entries");
    const Eigen::MatrixXd j = 0.5 * (j_hat + j_hat.transpose());
    if ((j - j_hat).norm() > 1e-8 * std::max(1.0, j.norm()))
        throw MatrixError(kModule, "information matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(j, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(hi > 0.0) || lo < 1e-12 * hi)
        throw MatrixError(kModule, "information matrix is not positive definite");

    CanonicalCone c;
    Eigen::LLT<Eigen::MatrixXd> llt(j);
    if (llt.info() != Eigen::Success)
        throw MatrixError(kModule, "Cholesky factorization failed");
    c.l_factor = llt.matrixU();
    const auto& p = spec.constraint_basis;
    c.p_star = c.l_factor.transpose().triangularView<Eigen::Lower>().solve(p);
    c.omega = c.p_star.transpose() * c.p_star;
    c.h_matrix = c.p_star * c.omega.ldlt().solve(p.transpose() * p);
    c.generators_embedded = c.h_matrix * spec.cone_generators;
    c.v_star_basis = c.l_factor * spec.null_basis;
    c.intrinsic_basis = linalg::column_basis(c.p_star);
    return c;
}

double cone_angle(const CanonicalCone& canon) {
    if (canon.d() != 2 || canon.generators_embedded.cols() != 2)
        throw DimensionError(kModule, "cone angle needs d = 2 and two generators");
    const Eigen::VectorXd a = canon.generators_embedded.col(0).normalized();
    const Eigen::VectorXd b = canon.generators_embedded.col(1).normalized();
    return std::acos(std::clamp(a.dot(b), -1.0, 1.0));
}

Decomposition decompose(const Eigen::VectorXd& z, const CanonicalCone& canon) {
    if (z.size() != canon.l_factor.rows()) throw DimensionError(kModule, "point dimension mismatch");
    Decomposition out;
    if (canon.v_star_basis.cols() == 0) {
        out.v_component = Eigen::VectorXd::Zero(z.size());
    } else {
        const Eigen::MatrixXd q = linalg::column_basis(canon.v_star_basis);
        out.v_component = q * (q.transpose() * z);
    }
    out.perp_component = z - out.v_component;
    return out;
}

}  // namespace coneinfer
