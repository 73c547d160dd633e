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

#include "coneinfer/qif_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "coneinfer/errors.hpp"
#include "coneinfer/linalg.hpp"

namespace coneinfer {

namespace {

constexpr const char* kModule = "qif_engine";

Eigen::MatrixXd weight_matrix(const Eigen::MatrixXd& c, double ridge) {
    if (ridge > 0.0) {
        const Eigen::MatrixXd reg =
            0.5 * (c + c.transpose()) + ridge * Eigen::MatrixXd::Identity(c.rows(), c.cols());
        return reg.ldlt().solve(Eigen::MatrixXd::Identity(c.rows(), c.cols()));
    }
    return linalg::pinv_symmetric(c);
}

// q = Q_N / N with its exact gradient and the Gauss-Newton curvature 2 G^T W G.
struct Evaluation {
    double q = 0.0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd curvature;
};

Evaluation evaluate(const Eigen::VectorXd& gamma, const LongitudinalDataset& data,
                    const LinkFunction& link, const CorrelationBasis& basis, double ridge) {
    const ScoreState st = extended_scores(gamma, data, link, basis, true);
    const Eigen::MatrixXd w = weight_matrix(st.second_moment, ridge);
    const Eigen::VectorXd z = w * st.mean_score;
    Evaluation ev;
    ev.q = std::max(0.0, st.mean_score.dot(z));
    const int n_sub = data.n_subjects();
    ev.grad = 2.0 * st.mean_score_jacobian.transpose() * z;
    Eigen::VectorXd corr = Eigen::VectorXd::Zero(gamma.size());
    for (int i = 0; i < n_sub; ++i)
        corr += st.subject_scores.row(i).dot(z) * (st.subject_jacobians[i].transpose() * z);
    ev.grad -= (2.0 / n_sub) * corr;
    ev.curvature = 2.0 * st.mean_score_jacobian.transpose() * w * st.mean_score_jacobian;
    ev.curvature = 0.5 * (ev.curvature + ev.curvature.transpose());
    return ev;
}

double q_only(const Eigen::VectorXd& gamma, const LongitudinalDataset& data,
              const LinkFunction& link, const CorrelationBasis& basis, double ridge) {
    return qif_value(gamma, data, link, basis, ridge) / data.n_subjects();
}

Eigen::VectorXd project_feasible(const Eigen::VectorXd& target, const Constraint& con,
                                 const Eigen::MatrixXd& metric) {
    switch (con.kind) {
        case Constraint::Kind::Unrestricted:
            return target;
        case Constraint::Kind::NullSpace:
            return project_subspace_cone(target, con.subspace, Eigen::MatrixXd(target.size(), 0),
                                         metric);
        case Constraint::Kind::Cone:
            return project_subspace_cone(target, con.subspace, con.rays, metric);
    }
    return target;
}

void check_constraint(const Constraint& con, int r) {
    if (con.kind == Constraint::Kind::Unrestricted) return;
    if ((con.subspace.cols() > 0 && con.subspace.rows() != r) ||
        (con.rays.cols() > 0 && con.rays.rows() != r))
        throw ConstraintError(kModule, "constraint set does not live in the parameter space");
    if (!con.subspace.allFinite() || !con.rays.allFinite())
        throw ConstraintError(kModule, "constraint set has non-finite entries");
}

// Symmetric matrix with eigenvalues raised to at least `floor`.
Eigen::MatrixXd floor_spectrum(const Eigen::MatrixXd& a, double floor) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (a + a.transpose()));
    const Eigen::VectorXd values = eig.eigenvalues().cwiseMax(floor);
    return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

ScoreState extended_scores(const Eigen::VectorXd& gamma, const LongitudinalDataset& data,
                           const LinkFunction& link, const CorrelationBasis& basis,
                           bool subject_jacobians) {
    const int n_sub = data.n_subjects();
    const int n = data.n_times();
    const int r = data.n_covariates();
    const int s = basis.size();
    if (gamma.size() != r)
        throw DimensionError(kModule, "gamma has " + std::to_string(gamma.size()) +
                                          " entries but the data have " + std::to_string(r) +
                                          " covariates");
    if (!gamma.allFinite()) throw DomainError(kModule, "gamma has non-finite entries");
    if (s < 1 || basis.n_times() != n)
        throw DimensionError(kModule, "correlation basis does not match the number of times");

    ScoreState st;
    st.gamma = gamma;
    st.subject_scores.resize(n_sub, r * s);
    st.mean_score_jacobian = Eigen::MatrixXd::Zero(r * s, r);
    st.marginal_variances.resize(n_sub, n);
    if (subject_jacobians) st.subject_jacobians.resize(n_sub);

    Eigen::VectorXd hp(n), hpp(n), c(n), dc(n), e(n), du(n);
    Eigen::MatrixXd jac(r * s, r);
    for (int i = 0; i < n_sub; ++i) {
        const Eigen::MatrixXd& x = data.covariates(i);
        const Eigen::VectorXd eta = x * gamma;
        for (int j = 0; j < n; ++j) {
            const double mu = link.evaluate(eta(j));
            const double v = link.variance(mu);
            if (!(v > 0.0) || !std::isfinite(v))
                throw VarianceError(kModule, "zero marginal variance at subject " +
                                                 std::to_string(i + 1) + ", time " +
                                                 std::to_string(j + 1));
            st.marginal_variances(i, j) = v;
            hp(j) = link.derivative(eta(j));
            hpp(j) = link.second_derivative(eta(j));
            c(j) = 1.0 / std::sqrt(v);
            dc(j) = -0.5 * c(j) / v * link.variance_derivative(mu) * hp(j);
            e(j) = data.responses()(i, j) - mu;
            du(j) = dc(j) * e(j) - c(j) * hp(j);
        }
        const Eigen::VectorXd u = c.cwiseProduct(e);
        const Eigen::VectorXd hc = hp.cwiseProduct(c);
        const Eigen::MatrixXd xd = x.transpose() * hc.asDiagonal();           // D^T diag(c)
        const Eigen::MatrixXd dux = du.asDiagonal() * x;                      // diag(du) X
        const Eigen::VectorXd curv = hpp.cwiseProduct(c) + hp.cwiseProduct(dc);
        for (int l = 0; l < s; ++l) {
            const Eigen::MatrixXd& m = basis.matrices[l];
            const Eigen::VectorXd wl = m * u;
            st.subject_scores.block(i, l * r, 1, r) = (xd * wl).transpose();
            jac.middleRows(l * r, r) = x.transpose() * curv.cwiseProduct(wl).asDiagonal() * x +
                                       xd * m * dux;
        }
        st.mean_score_jacobian += jac;
        if (subject_jacobians) st.subject_jacobians[i] = jac;
    }
    st.mean_score_jacobian /= n_sub;
    st.mean_score = st.subject_scores.colwise().mean().transpose();
    st.second_moment = st.subject_scores.transpose() * st.subject_scores / n_sub;
    st.second_moment = 0.5 * (st.second_moment + st.second_moment.transpose());
    return st;
}

double qif_value(const ScoreState& state, double ridge) {
    const Eigen::MatrixXd w = weight_matrix(state.second_moment, ridge);
    const double n_sub = static_cast<double>(state.subject_scores.rows());
    return std::max(0.0, n_sub * state.mean_score.dot(w * state.mean_score));
}

double qif_value(const Eigen::VectorXd& gamma, const LongitudinalDataset& data,
                 const LinkFunction& link, const CorrelationBasis& basis, double ridge) {
    return qif_value(extended_scores(gamma, data, link, basis), ridge);
}

Eigen::VectorXd qif_gradient(const Eigen::VectorXd& gamma, const LongitudinalDataset& data,
                             const LinkFunction& link, const CorrelationBasis& basis,
                             double ridge) {
    return data.n_subjects() * evaluate(gamma, data, link, basis, ridge).grad;
}

Constraint Constraint::unrestricted(int r) {
    Constraint c;
    c.kind = Kind::Unrestricted;
    c.subspace = Eigen::MatrixXd::Identity(r, r);
    c.rays = Eigen::MatrixXd(r, 0);
    return c;
}

Constraint Constraint::null_space(const HypothesisSpec& spec) {
    spec.validate();
    Constraint c;
    c.kind = Kind::NullSpace;
    c.subspace = spec.null_basis;
    c.rays = Eigen::MatrixXd(spec.r, 0);
    return c;
}

Constraint Constraint::cone(const HypothesisSpec& spec) {
    spec.validate();
    Constraint c;
    c.kind = Kind::Cone;
    c.subspace = spec.null_basis;
    c.rays = spec.gamma_rays();
    return c;
}

Eigen::VectorXd default_start(const LongitudinalDataset& data, const LinkFunction& link,
                              const Eigen::MatrixXd& null_basis) {
    const int n_sub = data.n_subjects();
    const int n = data.n_times();
    const int r = data.n_covariates();
    if (null_basis.rows() != r) throw DimensionError(kModule, "null basis does not match r");
    const Eigen::Index k = null_basis.cols();
    if (k == 0) return Eigen::VectorXd::Zero(r);

    Eigen::MatrixXd z(static_cast<Eigen::Index>(n_sub) * n, k);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n_sub) * n);
    for (int i = 0; i < n_sub; ++i) {
        z.middleRows(static_cast<Eigen::Index>(i) * n, n) = data.covariates(i) * null_basis;
        y.segment(static_cast<Eigen::Index>(i) * n, n) = data.responses().row(i).transpose();
    }
    if (link.kind() == LinkKind::Identity)
        return null_basis * z.colPivHouseholderQr().solve(y);

    // Gauss-Newton on the residual sum of squares.
    auto rss = [&](const Eigen::VectorXd& beta) {
        const Eigen::VectorXd eta = z * beta;
        double acc = 0.0;
        for (Eigen::Index j = 0; j < eta.size(); ++j) {
            const double res = y(j) - link.evaluate(eta(j));
            acc += res * res;
        }
        return acc;
    };
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
    double cur = rss(beta);
    for (int it = 0; it < 100; ++it) {
        const Eigen::VectorXd eta = z * beta;
        Eigen::VectorXd res(eta.size()), hp(eta.size());
        for (Eigen::Index j = 0; j < eta.size(); ++j) {
            res(j) = y(j) - link.evaluate(eta(j));
            hp(j) = link.derivative(eta(j));
        }
        const Eigen::MatrixXd jz = hp.asDiagonal() * z;
        const Eigen::VectorXd step = jz.colPivHouseholderQr().solve(res);
        double t = 1.0;
        bool moved = false;
        for (int h = 0; h < 30; ++h, t *= 0.5) {
            const Eigen::VectorXd cand = beta + t * step;
            const double val = rss(cand);
            if (std::isfinite(val) && val < cur) {
                beta = cand;
                moved = cur - val > 1e-14 * cur;
                cur = val;
                break;
            }
        }
        if (!moved) break;
    }
    return null_basis * beta;
}

FitComponent fit(const LongitudinalDataset& data, const LinkFunction& link,
                 const CorrelationBasis& basis, const Constraint& constraint,
                 const SolverOptions& options) {
    const int r = data.n_covariates();
    check_constraint(constraint, r);
    if (options.max_iter < 1 || options.max_halvings < 0 || !(options.tol > 0.0) ||
        options.ridge < 0.0)
        throw ConfigError(kModule, "invalid solver options");

    Eigen::VectorXd gamma;
    if (options.start) {
        if (options.start->size() != r) throw DimensionError(kModule, "start point has wrong size");
        gamma = project_feasible(*options.start, constraint, Eigen::MatrixXd::Identity(r, r));
    } else {
        const Eigen::MatrixXd space = constraint.kind == Constraint::Kind::Unrestricted
                                          ? Eigen::MatrixXd::Identity(r, r)
                                          : constraint.subspace;
        gamma = default_start(data, link, space);
    }

    FitComponent best;
    best.gamma = gamma;
    best.q = std::numeric_limits<double>::infinity();
    // Gauss-Newton ignores how C moves with gamma. The part of the Hessian it
    // misses is tracked by a structured PSB secant update.
    Eigen::MatrixXd correction = Eigen::MatrixXd::Zero(r, r);
    Eigen::VectorXd prev_gamma, prev_grad;
    for (int it = 0; it < options.max_iter; ++it) {
        const Evaluation ev = evaluate(gamma, data, link, basis, options.ridge);
        if (it > 0) {
            const Eigen::VectorXd step = gamma - prev_gamma;
            const double ss = step.squaredNorm();
            if (ss > 0.0) {
                const Eigen::VectorXd v = (ev.grad - prev_grad) - ev.curvature * step - correction * step;
                correction += (v * step.transpose() + step * v.transpose()) / ss -
                              (v.dot(step) / (ss * ss)) * (step * step.transpose());
            }
        }
        prev_gamma = gamma;
        prev_grad = ev.grad;
        const double scale = ev.curvature.trace() / std::max(1, r);
        const double gn_floor = 1e-10 * std::max(scale, 1e-300);

        // First try the corrected metric, with its spectrum kept within reach
        // of the Gauss-Newton one; if that step fails, plain Gauss-Newton.
        bool accepted = false, converged = false;
        double pg = 0.0;
        for (int attempt = 0; attempt < 2 && !accepted && !converged; ++attempt) {
            Eigen::MatrixXd metric;
            if (attempt == 0) {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ev.curvature, Eigen::EigenvaluesOnly);
                const double floor = std::max(gn_floor, 0.1 * eig.eigenvalues().minCoeff());
                metric = floor_spectrum(ev.curvature + correction, floor);
            } else {
                if (correction.isZero(0.0)) break;
                correction.setZero();
                metric = ev.curvature;
                metric.diagonal().array() += gn_floor;
            }
            const Eigen::VectorXd target = gamma - metric.ldlt().solve(ev.grad);
            const Eigen::VectorXd x = project_feasible(target, constraint, metric);
            pg = (metric * (gamma - x)).norm();
            if (attempt == 0) {
                best.gamma = gamma;
                best.q = ev.q;
                best.iterations = it;
                best.gradient_norm = pg;
            }
            if (pg <= options.tol) {
                best.gradient_norm = pg;
                converged = true;
                break;
            }

            const Eigen::VectorXd dir = x - gamma;
            const double slope = ev.grad.dot(dir);
            double t = 1.0;
            for (int h = 0; h <= options.max_halvings; ++h, t *= 0.5) {
                const Eigen::VectorXd cand = gamma + t * dir;
                double val;
                try {
                    val = q_only(cand, data, link, basis, options.ridge);
                } catch (const VarianceError&) {
                    continue;
                }
                if (std::isfinite(val) &&
                    val <= ev.q + 1e-4 * t * std::min(slope, 0.0) + 1e-14 * ev.q) {
                    gamma = cand;
                    accepted = true;
                    break;
                }
            }
        }
        if (converged) break;
        if (!accepted) {
            if (pg <= std::sqrt(options.tol)) break;
            throw ConvergenceError(kModule, "line search failed with projected gradient " +
                                                std::to_string(pg),
                                   best.gamma, data.n_subjects() * best.q);
        }
        if (it + 1 == options.max_iter)
            throw ConvergenceError(kModule, "iteration cap of " + std::to_string(options.max_iter) +
                                                " reached",
                                   best.gamma, data.n_subjects() * best.q);
    }
    best.iterations += 1;
    best.q *= data.n_subjects();
    return best;
}

QifFit fit_all(const LongitudinalDataset& data, const LinkFunction& link,
               const CorrelationBasis& basis, const HypothesisSpec& spec,
               const SolverOptions& options) {
    spec.validate();
    const int r = data.n_covariates();
    if (spec.r != r)
        throw DimensionError(kModule, "hypothesis dimension " + std::to_string(spec.r) +
                                          " does not match " + std::to_string(r) + " covariates");
    SolverOptions opts = options;
    if (!opts.start) opts.start = default_start(data, link, spec.null_basis);

    QifFit out;
    out.n_subjects = data.n_subjects();
    out.unrestricted = fit(data, link, basis, Constraint::unrestricted(r), opts);
    out.null = fit(data, link, basis, Constraint::null_space(spec), opts);

    const ScoreState at_hat = extended_scores(out.unrestricted.gamma, data, link, basis);
    const Eigen::MatrixXd w = weight_matrix(at_hat.second_moment, options.ridge);
    out.j_hat = at_hat.mean_score_jacobian.transpose() * w * at_hat.mean_score_jacobian;
    out.j_hat = 0.5 * (out.j_hat + out.j_hat.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.j_hat, Eigen::EigenvaluesOnly);
    const double hi = eig.eigenvalues().maxCoeff();
    out.j_invertible = hi > 0.0 && eig.eigenvalues().minCoeff() > 1e-12 * hi;
    out.cov_hat = out.j_invertible
                      ? Eigen::MatrixXd(out.j_hat.ldlt().solve(Eigen::MatrixXd::Identity(r, r)))
                      : linalg::pinv_symmetric(out.j_hat);
    out.cov_hat /= data.n_subjects();

    // Cone fit: start from the better of the null fit and the J-metric
    // projection of the unrestricted fit, so it can only improve on both.
    const Constraint cone = Constraint::cone(spec);
    SolverOptions cone_opts = opts;
    cone_opts.start = out.null.gamma;
    if (out.j_invertible) {
        const Eigen::VectorXd proj =
            project_subspace_cone(out.unrestricted.gamma, cone.subspace, cone.rays, out.j_hat);
        double qp = std::numeric_limits<double>::infinity();
        try {
            qp = qif_value(proj, data, link, basis, options.ridge);
        } catch (const VarianceError&) {
        }
        if (qp < out.null.q) cone_opts.start = proj;
    }
    out.cone = fit(data, link, basis, cone, cone_opts);
    return out;
}

double quadratic_approx_residual(const QifFit& fit, const Eigen::VectorXd& gamma,
                                 const LongitudinalDataset& data, const LinkFunction& link,
                                 const CorrelationBasis& basis, bool frozen_weight) {
    const Eigen::VectorXd& g_hat = fit.gamma_hat();
    if (gamma.size() != g_hat.size()) throw DimensionError(kModule, "gamma has wrong size");
    const double n_sub = data.n_subjects();
    const ScoreState at_hat = extended_scores(g_hat, data, link, basis);
    const Eigen::MatrixXd w_hat = linalg::pinv_symmetric(at_hat.second_moment);
    const double q_hat = n_sub * at_hat.mean_score.dot(w_hat * at_hat.mean_score);
    const ScoreState at = extended_scores(gamma, data, link, basis);
    const double q = frozen_weight ? n_sub * at.mean_score.dot(w_hat * at.mean_score)
                                   : qif_value(at);
    const Eigen::VectorXd delta = gamma - g_hat;
    return q - q_hat - n_sub * delta.dot(fit.j_hat * delta);
}

}  // namespace coneinfer
