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
#include <random>
#include <vector>

#include "doctest.h"

#include "coneinfer/errors.hpp"
#include "coneinfer/tube_weights.hpp"
#include "oracles.hpp"

using namespace coneinfer;

namespace {

Eigen::MatrixXd random_simplicial(int d, std::mt19937_64& gen) {
    // generators clustered around a common axis keep the cone pointed
    std::normal_distribution<double> normal;
    Eigen::MatrixXd g(d, d);
    Eigen::VectorXd axis = Eigen::VectorXd::Ones(d);
    for (int k = 0; k < d; ++k) {
        Eigen::VectorXd v(d);
        for (int i = 0; i < d; ++i) v(i) = normal(gen);
        g.col(k) = 0.6 * axis + v;
    }
    return g;
}

// Weights of the orthant in R^d: binomial(d, k) / 2^d.
Eigen::VectorXd orthant_weights(int d) {
    Eigen::VectorXd w(d + 1);
    for (int k = 0; k <= d; ++k) w(k) = oracle::binomial(d, k) / std::pow(2.0, d);
    return w;
}

double max_se_gap(const ChiBarWeights& mc, const Eigen::VectorXd& exact) {
    double worst = 0.0;
    for (Eigen::Index k = 0; k < exact.size(); ++k) {
        const double se = std::max((*mc.mc_stderr)(k), 1e-4);
        worst = std::max(worst, std::abs(mc.weights(k) - exact(k)) / se);
    }
    return worst;
}

}  // namespace

TEST_CASE("sphere volumes") {
    CHECK(sphere_volume(0) == doctest::Approx(2.0));
    CHECK(sphere_volume(1) == doctest::Approx(2 * M_PI));
    CHECK(sphere_volume(2) == doctest::Approx(4 * M_PI));
    CHECK(sphere_volume(3) == doctest::Approx(2 * M_PI * M_PI));
}

TEST_CASE("closed form weights in the plane") {
    const auto w = weights_closed_form_d2(M_PI / 3);
    CHECK(w.weights(0) == doctest::Approx(1.0 / 3));
    CHECK(w.weights(1) == doctest::Approx(0.5));
    CHECK(w.weights(2) == doctest::Approx(1.0 / 6));
    const auto right = weights_closed_form_d2(M_PI / 2);
    CHECK(right.weights.isApprox(Eigen::Vector3d(0.25, 0.5, 0.25)));
    const auto ray = weights_closed_form_d2(0.0);
    CHECK(ray.weights.isApprox(Eigen::Vector3d(0.5, 0.5, 0.0)));
    CHECK_THROWS_AS(weights_closed_form_d2(4.0), DomainError);
}

TEST_CASE("isotonic regression matches the pooling oracle") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(0.2, 3.0);
    for (int trial = 0; trial < 500; ++trial) {
        const int m = 2 + trial % 7;
        Eigen::VectorXd z(m), w(m);
        std::vector<double> zs(m), ws(m);
        for (int i = 0; i < m; ++i) {
            zs[i] = z(i) = normal(gen);
            ws[i] = w(i) = unif(gen);
        }
        CHECK(isotonic_levels(z, w) == oracle::pooled_levels(zs, ws));
        const Eigen::VectorXd fit = isotonic_decreasing(z, w);
        for (int i = 0; i + 1 < m; ++i) CHECK(fit(i) >= fit(i + 1) - 1e-12);
        // weighted totals are preserved
        CHECK(w.dot(fit) == doctest::Approx(w.dot(z)).epsilon(1e-12));
    }
}

TEST_CASE("level probabilities with equal weights") {
    for (int m = 2; m <= 4; ++m) {
        const auto exact = level_probabilities(m, Eigen::MatrixXd::Identity(m, m), LevelMethod::ExactSmallM);
        const auto want = oracle::equal_weight_levels(m);
        for (int k = 0; k < m; ++k) CHECK(exact.weights(k) == doctest::Approx(want[k]).epsilon(1e-10));
    }
    const auto three = level_probabilities(3, Eigen::MatrixXd::Identity(3, 3), LevelMethod::ExactSmallM);
    const auto closed = weights_closed_form_d2(M_PI / 3);
    CHECK(three.weights.isApprox(closed.weights, 1e-10));

    const auto mc = level_probabilities(6, Eigen::MatrixXd::Identity(6, 6), LevelMethod::MonteCarlo, 200000, 9);
    const auto want6 = oracle::equal_weight_levels(6);
    CHECK(max_se_gap(mc, Eigen::Map<const Eigen::VectorXd>(want6.data(), 6)) < 4.0);
}

TEST_CASE("level probabilities with unequal variances") {
    std::vector<double> var{1.0, 0.5, 2.0, 1.5};
    for (int m = 3; m <= 4; ++m) {
        Eigen::MatrixXd q = Eigen::MatrixXd::Zero(m, m);
        std::vector<double> v(var.begin(), var.begin() + m);
        for (int i = 0; i < m; ++i) q(i, i) = v[i];
        const auto exact = level_probabilities(m, q, LevelMethod::ExactSmallM);
        const auto mc = oracle::level_probabilities_mc(v, 400000, 41);
        for (int k = 0; k < m; ++k) CHECK(std::abs(exact.weights(k) - mc[k]) < 0.004);
        CHECK(exact.weights.sum() == doctest::Approx(1.0));
    }
    Eigen::MatrixXd full = Eigen::MatrixXd::Identity(3, 3);
    full(0, 1) = full(1, 0) = 0.3;
    CHECK_THROWS_AS(level_probabilities(3, full, LevelMethod::ExactSmallM), MatrixError);
}

TEST_CASE("monte carlo face dimensions") {
    Eigen::MatrixXd ray(1, 1);
    ray << 1.0;
    const auto half = weights_monte_carlo(PolyhedralCone::from_generators(ray), 20000, 1);
    CHECK(max_se_gap(half, Eigen::Vector2d(0.5, 0.5)) < 3.5);

    const auto orth = weights_monte_carlo(PolyhedralCone::from_generators(Eigen::MatrixXd::Identity(3, 3)), 40000, 2);
    CHECK(max_se_gap(orth, orthant_weights(3)) < 3.5);

    const auto a = weights_monte_carlo(PolyhedralCone::from_generators(Eigen::MatrixXd::Identity(3, 3)), 20000, 5, 1);
    const auto b = weights_monte_carlo(PolyhedralCone::from_generators(Eigen::MatrixXd::Identity(3, 3)), 20000, 5, 3);
    CHECK(a.weights == b.weights);
    CHECK_THROWS(weights_monte_carlo(PolyhedralCone::from_generators(Eigen::MatrixXd::Identity(3, 3)), 10, 5));
}

TEST_CASE("gauss-legendre rules") {
    std::vector<double> x, w;
    gauss_legendre(8, x, w);
    for (int p = 0; p <= 15; ++p) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * std::pow(x[i], p);
        CHECK(s == doctest::Approx(1.0 / (p + 1)).epsilon(1e-13));
    }
}

TEST_CASE("manifold parametrization derivatives") {
    std::mt19937_64 gen(4);
    for (int d = 2; d <= 4; ++d) {
        const ManifoldGeometry geom(PolyhedralCone::from_generators(random_simplicial(d, gen)));
        Eigen::VectorXd c = Eigen::VectorXd::Constant(d - 1, 0.37);
        c(0) = 0.61;
        const Eigen::VectorXd t = geom.parametrization(c);
        CHECK(t.norm() == doctest::Approx(1.0));
        const auto f = [&](const Eigen::VectorXd& v) { return geom.parametrization(v); };
        CHECK((geom.jacobian(c) - oracle::jacobian_fd(f, c)).norm() < 1e-6);
        std::vector<int> face(d);
        for (int k = 0; k < d; ++k) face[k] = k;
        const auto point = geom.evaluate(face, c, true);
        for (int j = 0; j < d - 1; ++j) {
            const auto col = [&](const Eigen::VectorXd& v) {
                return Eigen::VectorXd(geom.evaluate(face, v).s.col(j));
            };
            CHECK((point.second[j] - oracle::jacobian_fd(col, c)).norm() < 1e-5);
        }
    }
}

TEST_CASE("arc and octant constants") {
    for (double phi : {0.4, M_PI / 3, 2.0}) {
        Eigen::MatrixXd g(2, 2);
        g << 1, std::cos(phi), 0, std::sin(phi);
        const auto k = geometric_constants(ManifoldGeometry(PolyhedralCone::from_generators(g)));
        CHECK(k.kappa0 == doctest::Approx(phi).epsilon(1e-9));
        CHECK(k.ell0 == doctest::Approx(2.0));
        const auto w = weights_tube(k, 2);
        CHECK(w.weights.isApprox(weights_closed_form_d2(phi).weights, 1e-8));
    }
    const auto oct = geometric_constants(ManifoldGeometry(PolyhedralCone::from_generators(Eigen::MatrixXd::Identity(3, 3))));
    CHECK(oct.kappa0 == doctest::Approx(M_PI / 2).epsilon(1e-8));
    CHECK(oct.ell0 == doctest::Approx(3 * M_PI / 2).epsilon(1e-8));
    CHECK(oct.upsilon0 == doctest::Approx(3 * M_PI / 2).epsilon(1e-8));
    CHECK(std::abs(oct.kappa2) < 1e-8);
    CHECK(std::abs(oct.ell1) < 1e-8);
    CHECK(oct.kappa2 + oct.ell1 + oct.upsilon0 == doctest::Approx(2 * M_PI - oct.kappa0).epsilon(1e-8));

    Eigen::MatrixXd point(1, 1);
    point << 2.0;
    const auto k1 = geometric_constants(ManifoldGeometry(PolyhedralCone::from_generators(point)));
    CHECK(weights_tube(k1, 1).weights.isApprox(Eigen::Vector2d(0.5, 0.5), 1e-12));
}

TEST_CASE("tube weights on orthants") {
    for (int d = 1; d <= 4; ++d) {
        const auto k = geometric_constants(ManifoldGeometry(PolyhedralCone::from_generators(Eigen::MatrixXd::Identity(d, d))));
        CHECK(weights_tube(k, d).weights.isApprox(orthant_weights(d), 1e-6));
    }
}

TEST_CASE("tube weights of random simplicial cones in three dimensions") {
    std::mt19937_64 gen(8);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::MatrixXd g = random_simplicial(3, gen);
        const auto k = geometric_constants(ManifoldGeometry(PolyhedralCone::from_generators(g)));
        CHECK(k.kappa2 + k.ell1 + k.upsilon0 == doctest::Approx(2 * M_PI - k.kappa0).epsilon(1e-6));
        const Eigen::Vector4d want = oracle::simplicial_weights_3d(g);
        const auto w = weights_tube(k, 3);
        CHECK((w.weights - want).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("tube weights of random simplicial cones in four dimensions") {
    std::mt19937_64 gen(12);
    for (int trial = 0; trial < 3; ++trial) {
        const Eigen::MatrixXd g = random_simplicial(4, gen);
        const auto cone = PolyhedralCone::from_generators(g);
        const auto tube = weights_tube(geometric_constants(ManifoldGeometry(cone)), 4);
        const auto mc = weights_monte_carlo(cone, 200000, 100 + trial);
        CHECK(max_se_gap(mc, tube.weights) < 4.0);
        // alternating sum vanishes for pointed cones that are not subspaces
        double alt = 0.0;
        for (int j = 0; j <= 4; ++j) alt += (j % 2 ? -1.0 : 1.0) * tube.weights(j);
        CHECK(std::abs(alt) < 1e-6);
    }
}

TEST_CASE("tube route guards") {
    Eigen::MatrixXd g(2, 3);
    g << 1, 0, 1, 0, 1, 1;
    CHECK_THROWS_AS(ManifoldGeometry(PolyhedralCone::from_generators(g)), DimensionError);
    CHECK_THROWS_AS(geometric_constants(ManifoldGeometry(PolyhedralCone::from_generators(Eigen::MatrixXd::Identity(5, 5)))),
                    DimensionError);
    GeometricConstants bad;
    bad.kappa0 = 7.0;
    bad.ell0 = 2.0;
    CHECK_THROWS_AS(weights_tube(bad, 2), NonConvexManifoldError);
}

TEST_CASE("chi-bar tail probabilities") {
    const Eigen::Vector3d w(1.0 / 3, 0.5, 1.0 / 6);
    CHECK(chibar_tail(w, 0.0) == doctest::Approx(1.0));
    CHECK(std::abs(chibar_tail(w, 3.820) - 0.05) < 2e-4);
    for (int d = 1; d <= 4; ++d) {
        Eigen::VectorXd only = Eigen::VectorXd::Zero(d + 1);
        only(d) = 1.0;
        for (double c : {0.3, 1.0, 4.0, 9.0}) CHECK(chibar_tail(only, c) == doctest::Approx(oracle::chisq_tail(d, c)).epsilon(1e-12));
    }
    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd mix(5);
        for (int k = 0; k < 5; ++k) mix(k) = unif(gen);
        mix /= mix.sum();
        const double c = 8.0 * unif(gen) + 0.01;
        double want = 0.0;
        for (int k = 0; k < 5; ++k) want += mix(k) * oracle::chisq_tail(k, c);
        CHECK(chibar_tail(mix, c) == doctest::Approx(want).epsilon(1e-12));
    }
    CHECK_THROWS_AS(chibar_tail(Eigen::Vector2d(0.3, 0.3), 1.0), WeightError);
}

TEST_CASE("chi-bar quantiles") {
    CHECK(std::abs(chibar_quantile(Eigen::Vector3d(1.0 / 3, 0.5, 1.0 / 6), 0.05) - 3.820) < 1e-3);
    CHECK(std::abs(chibar_quantile(Eigen::Vector3d(0, 0, 1), 0.05) - 5.991) < 1e-3);
    CHECK(std::abs(chibar_quantile(Eigen::Vector2d(0.5, 0.5), 0.05) - 2.706) < 1e-3);
    // probability mass at zero above 1 - alpha
    CHECK(chibar_quantile(Eigen::Vector2d(0.97, 0.03), 0.05) == 0.0);
    CHECK_THROWS_AS(chibar_quantile(Eigen::Vector3d(0.2, 0.2, 0.2), 0.05), WeightError);
}
