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

#include <cmath>

#include "doctest.h"

#include "coneinfer/errors.hpp"
#include "coneinfer/testing_power.hpp"
#include "oracles.hpp"

using namespace coneinfer;

namespace {

LongitudinalDataset group_data(const Eigen::VectorXd& gamma, int n_subjects, std::uint64_t seed) {
    GeneratorConfig cfg;
    cfg.gamma = gamma;
    cfg.n_subjects = n_subjects;
    cfg.n_times = 3;
    return simulate_dataset(cfg, seed);
}

// Published local power table (three rows by delta = 0..5).
const double kTableLowerSn[6] = {0.025, 0.170, 0.518, 0.852, 0.980, 0.999};
const double kTableExactStar[6] = {0.050, 0.133, 0.416, 0.771, 0.957, 0.996};
const double kTableLowerStar[6] = {0.007, 0.074, 0.327, 0.710, 0.940, 0.995};

}  // namespace

TEST_CASE("normal lower bound") {
    CHECK(std::abs(power_lower_bound(2.0, 3.820) - 0.518) < 1e-3);
    CHECK(std::abs(power_lower_bound(0.0, 3.820) - 0.025) < 1e-3);
    CHECK(std::abs(power_lower_bound(5.0, 5.991) - 0.995) < 1e-3);
    CHECK(power_lower_bound(1.0, 3.0) == doctest::Approx(0.5 * std::erfc((std::sqrt(3.0) - 1.0) / std::sqrt(2.0))));
    CHECK_THROWS_AS(power_lower_bound(1.0, 0.0), DomainError);
}

TEST_CASE("exact unrestricted power agrees with the noncentral chi-squared law") {
    CHECK(std::abs(power_unrestricted_exact(0.0, 2, 5.991) - 0.050) < 1e-3);
    CHECK(std::abs(power_unrestricted_exact(2.0, 2, 5.991) - 0.416) < 1e-3);
    CHECK(std::abs(power_unrestricted_exact(3.0, 2, 5.991) - 0.771) < 1e-3);
    for (int df : {1, 2, 3, 5})
        for (double delta : {0.0, 0.5, 1.7, 3.0, 6.0})
            for (double b : {1.0, 5.991, 12.0}) {
                const double want = delta == 0.0 ? oracle::chisq_tail(std::min(df, 4), b)
                                                 : oracle::noncentral_chisq_tail(df, delta * delta, b);
                if (df == 5 && delta == 0.0) continue;
                CHECK(power_unrestricted_exact(delta, df, b) == doctest::Approx(want).epsilon(1e-9));
            }
}

TEST_CASE("power table matches the published values") {
    const PowerTable t = reproduce_table1();
    REQUIRE(t.delta.size() == 6);
    for (int k = 0; k < 6; ++k) {
        CHECK(std::abs(t.restricted_lower[k] - kTableLowerSn[k]) <= 1e-3);
        CHECK(std::abs(t.unrestricted_exact[k] - kTableExactStar[k]) <= 1e-3);
        CHECK(std::abs(t.unrestricted_lower[k] - kTableLowerStar[k]) <= 1e-3);
    }
    const std::string text = format_power_table(t);
    CHECK(text.find("0.518") != std::string::npos);
}

TEST_CASE("noncentrality") {
    const HypothesisSpec spec = order_cone(3, 3);
    const CanonicalCone canon = canonicalize(spec, Eigen::MatrixXd::Identity(6, 6));
    CHECK(noncentrality(canon, spec, Eigen::Vector2d::Zero()) == 0.0);
    CHECK(noncentrality(canon, spec, Eigen::Vector2d(0, 1)) == doctest::Approx(std::sqrt(6.0)));
    const Eigen::Vector2d u(1.0, 0.8);
    CHECK(noncentrality(canon, spec, 2.5 * u) == doctest::Approx(2.5 * noncentrality(canon, spec, u)));
    CHECK_THROWS_AS(noncentrality(canon, spec, Eigen::Vector2d(-1, 0)), ConstraintError);
    const PowerSpec ps = make_power_spec(canon, spec, Eigen::Vector2d(0, 1), 2, 5.991, 3.820);
    CHECK(ps.delta == doctest::Approx(std::sqrt(6.0)));
}

TEST_CASE("weight routes") {
    CHECK(weight_route_from_name("closed") == WeightRoute::ClosedForm);
    CHECK(weight_route_from_name("level") == WeightRoute::LevelProb);
    CHECK(weight_route_from_name("mc") == WeightRoute::MonteCarlo);
    CHECK(weight_route_from_name("tube") == WeightRoute::Tube);
    CHECK(weight_route_from_name("auto") == WeightRoute::Auto);
    CHECK_THROWS_AS(weight_route_from_name("magic"), ConfigError);

    const Eigen::MatrixXd i6 = Eigen::MatrixXd::Identity(6, 6);
    const HypothesisSpec m3 = order_cone(3, 3);
    const CanonicalCone c3 = canonicalize(m3, i6);
    const auto autow = chibar_weights(m3, c3, i6);
    CHECK(autow.source == WeightSource::ClosedForm);
    CHECK(autow.weights.isApprox(Eigen::Vector3d(1.0 / 3, 0.5, 1.0 / 6), 1e-10));
    WeightOptions opt;
    for (auto route : {WeightRoute::LevelProb, WeightRoute::Tube}) {
        opt.route = route;
        CHECK(chibar_weights(m3, c3, i6, opt).weights.isApprox(autow.weights, 1e-6));
    }
    opt.route = WeightRoute::MonteCarlo;
    opt.replicates = 100000;
    const auto mc = chibar_weights(m3, c3, i6, opt);
    CHECK((mc.weights - autow.weights).cwiseAbs().maxCoeff() < 4 * mc.mc_stderr->maxCoeff());

    const HypothesisSpec m4 = order_cone(4);
    const Eigen::MatrixXd i4 = Eigen::MatrixXd::Identity(4, 4);
    const auto w4 = chibar_weights(m4, canonicalize(m4, i4), i4);
    CHECK(w4.source == WeightSource::LevelProb);
    CHECK(w4.weights.isApprox(Eigen::Vector4d(0.25, 11.0 / 24, 0.25, 1.0 / 24), 1e-10));

    // a non-order cone in three dimensions goes through the tube formula
    Eigen::MatrixXd g(3, 3);
    g << 1, 0.2, 0.1, 0.1, 1, 0.3, 0.2, 0.1, 1;
    const HypothesisSpec custom = make_hypothesis(Eigen::MatrixXd::Identity(3, 3), g);
    const Eigen::MatrixXd i3 = Eigen::MatrixXd::Identity(3, 3);
    const auto wt = chibar_weights(custom, canonicalize(custom, i3), i3);
    CHECK(wt.source == WeightSource::Tube);
    CHECK((wt.weights - oracle::simplicial_weights_3d(g)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("test under the null") {
    Eigen::VectorXd truth(6);
    truth << 1, 1, 1, 0.5, 0.5, 0.5;
    const auto data = group_data(truth, 1000, 42);
    const TestResult r = run_test(data, LinkFunction(), make_basis(BasisKind::Exchangeable, 3), order_cone(3, 3), 0.05);
    CHECK(r.s_n >= 0.0);
    CHECK(r.s_n_star >= r.s_n - 1e-9);
    CHECK(r.p_value >= 0.0);
    CHECK(r.p_value <= 1.0);
    CHECK(r.critical_value > 0.0);
    const TestResult again = run_test(data, LinkFunction(), make_basis(BasisKind::Exchangeable, 3), order_cone(3, 3), 0.05);
    CHECK(again.p_value == r.p_value);
}

TEST_CASE("test detects strongly ordered means") {
    // standard error of a group mean is about 1 / sqrt(N / 3)
    Eigen::VectorXd truth(6);
    truth << 0.5, 0.25, 0.0, 0.5, 0.5, 0.5;
    const auto data = group_data(truth, 600, 43);
    const TestResult r = run_test(data, LinkFunction(), make_basis(BasisKind::Exchangeable, 3), order_cone(3, 3), 0.05);
    CHECK(r.p_value < 0.01);
}

TEST_CASE("interior estimate gives equal statistics") {
    Eigen::VectorXd truth(6);
    truth << 1.6, 1, 0.4, 0.5, 0.5, 0.5;
    const auto data = group_data(truth, 300, 44);
    const TestResult r = run_test(data, LinkFunction(), make_basis(BasisKind::Exchangeable, 3), order_cone(3, 3), 0.05);
    CHECK(std::abs(r.s_n - r.s_n_star) < 1e-6 * std::max(1.0, r.s_n));
    CHECK((r.fit.gamma_tilde() - r.fit.gamma_hat()).norm() < 1e-6);
}

TEST_CASE("statistic matches its projection form") {
    Eigen::VectorXd truth(6);
    truth << 1, 0.9, 1, 0.5, 0.5, 0.5;
    const HypothesisSpec spec = order_cone(3, 3);
    for (std::uint64_t seed : {45, 46, 47}) {
        const auto data = group_data(truth, 2000, seed);
        const TestResult r = run_test(data, LinkFunction(), make_basis(BasisKind::Exchangeable, 3), spec, 0.05);
        const Eigen::MatrixXd& j = r.fit.j_hat;
        const Eigen::VectorXd& g = r.fit.gamma_hat();
        const Constraint cone = Constraint::cone(spec);
        const Eigen::VectorXd pc = project_subspace_cone(g, cone.subspace, cone.rays, j);
        const Eigen::VectorXd pn = project_subspace_cone(g, spec.null_basis, Eigen::MatrixXd(6, 0), j);
        const double n = r.fit.n_subjects;
        const double proj_form = n * ((g - pn).dot(j * (g - pn)) - (g - pc).dot(j * (g - pc)));
        CHECK(std::abs(r.s_n - proj_form) < 0.05 + 0.05 * r.s_n);
        CHECK(r.projection_diag < 0.02 * g.norm());
        CHECK_FALSE(r.projection_warning);
    }
}
