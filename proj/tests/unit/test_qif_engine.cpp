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

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"

#include "coneinfer/errors.hpp"
#include "coneinfer/qif_engine.hpp"
#include "oracles.hpp"

using namespace coneinfer;

namespace {

LongitudinalDataset gaussian_data(const Eigen::VectorXd& gamma, int n_subjects, std::uint64_t seed,
                                  LinkKind link = LinkKind::Identity, double noise = 1.0) {
    GeneratorConfig cfg;
    cfg.gamma = gamma;
    cfg.link = link;
    cfg.design.kind = CovariateDesign::Kind::Gaussian;
    cfg.design.intercept = true;
    cfg.n_subjects = n_subjects;
    cfg.n_times = 3;
    cfg.noise_scale = noise;
    return simulate_dataset(cfg, seed);
}

LongitudinalDataset group_data(const Eigen::VectorXd& gamma, int n_subjects, std::uint64_t seed) {
    GeneratorConfig cfg;
    cfg.gamma = gamma;
    cfg.n_subjects = n_subjects;
    cfg.n_times = 3;
    return simulate_dataset(cfg, seed);
}

}  // namespace

TEST_CASE("scalar hand example") {
    Eigen::MatrixXd y(2, 1);
    y << 2, 4;
    std::vector<Eigen::MatrixXd> x(2, Eigen::MatrixXd::Ones(1, 1));
    const LongitudinalDataset data(y, x);
    const auto basis = make_basis(BasisKind::Independence, 1);
    const LinkFunction link;
    const ScoreState s = extended_scores(Eigen::VectorXd::Zero(1), data, link, basis);
    CHECK(s.subject_scores(0, 0) == doctest::Approx(2.0));
    CHECK(s.subject_scores(1, 0) == doctest::Approx(4.0));
    CHECK(s.mean_score(0) == doctest::Approx(3.0));
    CHECK(s.second_moment(0, 0) == doctest::Approx(10.0));
    CHECK(qif_value(s) == doctest::Approx(1.8));
}

TEST_CASE("zero residuals give a zero score") {
    Eigen::VectorXd gamma(2);
    gamma << 0.7, -0.3;
    const auto data = gaussian_data(gamma, 50, 1, LinkKind::Identity, 0.0);
    for (auto kind : {BasisKind::Independence, BasisKind::Exchangeable}) {
        const auto basis = make_basis(kind, 3);
        const ScoreState s = extended_scores(gamma, data, LinkFunction(), basis);
        CHECK(s.mean_score.norm() < 1e-12);
        CHECK(qif_value(s) == doctest::Approx(0.0));
    }
    const auto basis = make_basis(BasisKind::Exchangeable, 3);
    CHECK(extended_scores(gamma, data, LinkFunction(), basis).subject_scores.cols() == 4);
}

TEST_CASE("score jacobians match finite differences") {
    struct Case {
        LinkKind link;
        Eigen::VectorXd gamma;
    };
    Eigen::VectorXd g(3);
    g << 0.2, -0.4, 0.3;
    for (const Case& c : {Case{LinkKind::Identity, g}, Case{LinkKind::Log, 0.5 * g}, Case{LinkKind::Logit, g}}) {
        const auto data = gaussian_data(c.gamma, 40, 3, LinkKind::Identity, 0.5);
        const LinkFunction link(c.link);
        for (auto kind : {BasisKind::Exchangeable, BasisKind::Ar1}) {
            const auto basis = make_basis(kind, 3);
            const Eigen::VectorXd at = c.gamma + Eigen::VectorXd::Constant(3, 0.05);
            const ScoreState s = extended_scores(at, data, link, basis, true);
            const auto mean = [&](const Eigen::VectorXd& v) {
                return Eigen::VectorXd(extended_scores(v, data, link, basis).mean_score);
            };
            const Eigen::MatrixXd fd = oracle::jacobian_fd(mean, at);
            CHECK((s.mean_score_jacobian - fd).norm() <= 1e-5 * fd.norm());
            for (int i : {0, 17}) {
                const auto subj = [&](const Eigen::VectorXd& v) {
                    return Eigen::VectorXd(extended_scores(v, data, link, basis).subject_scores.row(i).transpose());
                };
                const Eigen::MatrixXd fdi = oracle::jacobian_fd(subj, at);
                CHECK((s.subject_jacobians[i] - fdi).norm() <= 1e-5 * std::max(1.0, fdi.norm()));
            }
            const auto q = [&](const Eigen::VectorXd& v) { return qif_value(v, data, link, basis); };
            const Eigen::VectorXd grad = qif_gradient(at, data, link, basis);
            const Eigen::VectorXd fdg = oracle::gradient_fd(q, at, 1e-4);
            CHECK((grad - fdg).norm() <= 1e-5 * std::max(1.0, fdg.norm()));
        }
    }
}

TEST_CASE("rank-deficient second moment uses the pseudo-inverse") {
    // N = 2 with four score components: C has rank at most 2
    Eigen::MatrixXd y(2, 3);
    y << 1.0, 0.2, -0.5, 0.3, 1.1, 0.4;
    std::vector<Eigen::MatrixXd> x(2, Eigen::MatrixXd::Ones(3, 2));
    x[0](1, 1) = 0.0;
    x[1](2, 1) = -1.0;
    const LongitudinalDataset data(y, x);
    const auto basis = make_basis(BasisKind::Exchangeable, 3);
    const Eigen::Vector2d gamma(0.1, 0.2);
    const ScoreState s = extended_scores(gamma, data, LinkFunction(), basis);
    const double q = qif_value(s);
    CHECK(std::isfinite(q));
    double previous = std::abs(qif_value(s, 1e-4) - q);
    for (double ridge : {1e-6, 1e-8}) {
        const double gap = std::abs(qif_value(s, ridge) - q);
        CHECK(gap <= previous);
        previous = gap;
    }
    CHECK(previous < 1e-5 * std::max(1.0, q));
}

TEST_CASE("unrestricted fit is consistent") {
    const Eigen::Vector2d truth(1.0, -0.5);
    const auto data = gaussian_data(truth, 500, 2024);
    const auto basis = make_basis(BasisKind::Exchangeable, 3);
    const FitComponent f = fit(data, LinkFunction(), basis, Constraint::unrestricted(2));
    CHECK((f.gamma - truth).cwiseAbs().maxCoeff() < 0.1);
    CHECK(f.gradient_norm < 1e-6);
    const FitComponent again = fit(data, LinkFunction(), basis, Constraint::unrestricted(2));
    CHECK(again.gamma == f.gamma);
}

TEST_CASE("iteration cap raises with the best iterate") {
    const Eigen::Vector2d truth(1.0, -0.5);
    const auto data = gaussian_data(truth, 200, 5, LinkKind::Logit, 0.2);
    SolverOptions opts;
    opts.max_iter = 1;
    opts.tol = 1e-300;
    try {
        fit(data, LinkFunction(LinkKind::Logit), make_basis(BasisKind::Exchangeable, 3),
            Constraint::unrestricted(2), opts);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.best_iterate().size() == 2);
        CHECK(std::isfinite(e.best_value()));
    }
}

TEST_CASE("fit ordering holds on every fixture") {
    const HypothesisSpec spec = order_cone(3, 3);
    std::vector<Eigen::VectorXd> truths;
    Eigen::VectorXd t(6);
    t << 1, 1, 1, 0.5, 0.5, 0.5;
    truths.push_back(t);
    t << 1.3, 1, 0.7, 0.5, -0.5, 0.2;
    truths.push_back(t);
    t << 0.7, 1, 1.3, 0.5, 0.5, 0.5;
    truths.push_back(t);
    std::uint64_t seed = 100;
    for (const auto& truth : truths) {
        for (auto kind : {BasisKind::Independence, BasisKind::Exchangeable, BasisKind::Ar1}) {
            const auto data = group_data(truth, 150, seed++);
            const QifFit f = fit_all(data, LinkFunction(), make_basis(kind, 3), spec);
            CHECK(f.null.q >= f.cone.q - 1e-9);
            CHECK(f.cone.q >= f.unrestricted.q - 1e-9);
            // the cone fit lies in V + C
            const Eigen::VectorXd means = f.gamma_tilde().head(3);
            CHECK(means(0) >= means(1) - 1e-7);
            CHECK(means(1) >= means(2) - 1e-7);
        }
    }
}

TEST_CASE("cone fit equals the unrestricted fit in the interior") {
    Eigen::VectorXd truth(6);
    truth << 1.6, 1, 0.4, 0.5, 0.5, 0.5;
    const auto data = group_data(truth, 300, 77);
    const QifFit f = fit_all(data, LinkFunction(), make_basis(BasisKind::Exchangeable, 3), order_cone(3, 3));
    CHECK((f.gamma_tilde() - f.gamma_hat()).norm() < 1e-6);
    CHECK(f.cone.q == doctest::Approx(f.unrestricted.q).epsilon(1e-6));
}

TEST_CASE("quadratic approximation residual") {
    Eigen::VectorXd truth(6);
    truth << 1, 1, 1, 0.5, 0.5, 0.5;
    const HypothesisSpec spec = order_cone(3, 3);
    SUBCASE("zero at the unrestricted fit") {
        const auto data = group_data(truth, 200, 8);
        const auto basis = make_basis(BasisKind::Exchangeable, 3);
        const QifFit f = fit_all(data, LinkFunction(), basis, spec);
        CHECK(std::abs(quadratic_approx_residual(f, f.gamma_hat(), data, LinkFunction(), basis)) < 1e-9);
    }
    SUBCASE("exact for the linear model with independence basis") {
        const auto data = group_data(truth, 200, 9);
        const auto basis = make_basis(BasisKind::Independence, 3);
        SolverOptions tight;
        tight.tol = 1e-13;
        const QifFit f = fit_all(data, LinkFunction(), basis, spec, tight);
        Eigen::VectorXd away = f.gamma_hat();
        away(0) += 0.3;
        away(4) -= 0.2;
        const double q = qif_value(away, data, LinkFunction(), basis);
        CHECK(std::abs(quadratic_approx_residual(f, away, data, LinkFunction(), basis)) < 1e-9 * std::max(1.0, q));
    }
    SUBCASE("residual shrinks with the sample size") {
        const auto basis = make_basis(BasisKind::Exchangeable, 3);
        Eigen::VectorXd u(6);
        u << 1, -1, 0.5, 0.3, -0.2, 0.1;
        auto median_residual = [&](int n) {
            std::vector<double> out;
            for (int k = 0; k < 100; ++k) {
                const auto data = group_data(truth, n, 5000 + k);
                const QifFit f = fit_all(data, LinkFunction(), basis, spec);
                const Eigen::VectorXd at = f.gamma_hat() + u / std::sqrt(static_cast<double>(n));
                out.push_back(std::abs(quadratic_approx_residual(f, at, data, LinkFunction(), basis, false)));
            }
            std::nth_element(out.begin(), out.begin() + 50, out.end());
            return out[50];
        };
        CHECK(median_residual(2000) < median_residual(500));
    }
}
