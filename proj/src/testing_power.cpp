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

#include "coneinfer/testing_power.hpp"

#include <cmath>
#include <cstdio>

#include <boost/math/special_functions/gamma.hpp>

#include "coneinfer/errors.hpp"

namespace coneinfer {

namespace {

constexpr const char* kModule = "testing_power";

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

ChiBarWeights level_route(const HypothesisSpec& spec, const Eigen::MatrixXd& j_hat,
                          const WeightOptions& options) {
    if (!spec.order_groups)
        throw ConfigError(kModule, "level-probability weights need an order-cone hypothesis");
    const int m = *spec.order_groups;
    const Eigen::MatrixXd cov = j_hat.ldlt().solve(Eigen::MatrixXd::Identity(j_hat.rows(), j_hat.cols()));
    const Eigen::MatrixXd q = 0.5 * (cov.topLeftCorner(m, m) + cov.topLeftCorner(m, m).transpose());
    if (m <= 4) return level_probabilities(m, q, LevelMethod::ExactSmallM);
    return level_probabilities(m, q, LevelMethod::MonteCarlo, options.replicates, options.seed,
                               options.jobs);
}

ChiBarWeights tube_route(const CanonicalCone& canon, const WeightOptions& options) {
    const ManifoldGeometry geom(canon.intrinsic_cone());
    return weights_tube(geometric_constants(geom, options.quadrature), canon.d());
}

ChiBarWeights mc_route(const CanonicalCone& canon, const WeightOptions& options) {
    return weights_monte_carlo(canon.intrinsic_cone(), options.replicates, options.seed,
                               options.jobs);
}

}  // namespace

WeightRoute weight_route_from_name(std::string_view name) {
    if (name == "auto") return WeightRoute::Auto;
    if (name == "closed" || name == "closed_form") return WeightRoute::ClosedForm;
    if (name == "level" || name == "level_prob") return WeightRoute::LevelProb;
    if (name == "mc" || name == "monte_carlo") return WeightRoute::MonteCarlo;
    if (name == "tube") return WeightRoute::Tube;
    throw ConfigError(kModule, "unknown weight route '" + std::string(name) + "'");
}

std::string_view weight_route_name(WeightRoute route) noexcept {
    switch (route) {
        case WeightRoute::Auto: return "auto";
        case WeightRoute::ClosedForm: return "closed_form";
        case WeightRoute::LevelProb: return "level_prob";
        case WeightRoute::MonteCarlo: return "monte_carlo";
        case WeightRoute::Tube: return "tube";
    }
    return "auto";
}

ChiBarWeights chibar_weights(const HypothesisSpec& spec, const CanonicalCone& canon,
                             const Eigen::MatrixXd& j_hat, const WeightOptions& options) {
    switch (options.route) {
        case WeightRoute::ClosedForm: return weights_closed_form_d2(cone_angle(canon));
        case WeightRoute::LevelProb: return level_route(spec, j_hat, options);
        case WeightRoute::Tube: return tube_route(canon, options);
        case WeightRoute::MonteCarlo: return mc_route(canon, options);
        case WeightRoute::Auto: break;
    }
    const int d = canon.d();
    if (d == 2 && canon.generators_embedded.cols() == 2)
        return weights_closed_form_d2(cone_angle(canon));
    if (spec.order_groups && d <= 4) return level_route(spec, j_hat, options);
    if (d <= 4) {
        try {
            return tube_route(canon, options);
        } catch (const DimensionError&) {
        } catch (const QuadratureError&) {
        } catch (const NonConvexManifoldError&) {
        }
    }
    return mc_route(canon, options);
}

TestResult run_test(const LongitudinalDataset& data, const LinkFunction& link,
                    const CorrelationBasis& basis, const HypothesisSpec& spec, double alpha,
                    const WeightOptions& weights, const SolverOptions& solver) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError(kModule, "alpha must lie in (0, 1)");
    TestResult res;
    res.alpha = alpha;
    res.fit = fit_all(data, link, basis, spec, solver);
    res.s_n = std::max(0.0, res.fit.null.q - res.fit.cone.q);
    res.s_n_star = std::max(0.0, res.fit.null.q - res.fit.unrestricted.q);
    res.canon = canonicalize(spec, res.fit.j_hat);
    res.weights_used = chibar_weights(spec, res.canon, res.fit.j_hat, weights);
    res.p_value = std::clamp(chibar_tail(res.weights_used, res.s_n), 0.0, 1.0);
    res.critical_value = chibar_quantile(res.weights_used, alpha);

    const Constraint cone = Constraint::cone(spec);
    const Eigen::VectorXd proj =
        project_subspace_cone(res.fit.gamma_hat(), cone.subspace, cone.rays, res.fit.j_hat);
    res.projection_diag = (res.fit.gamma_tilde() - proj).norm();
    res.projection_warning = res.projection_diag > 0.1 * res.fit.gamma_hat().norm();
    return res;
}

double power_lower_bound(double delta, double b) {
    if (!(b > 0.0)) throw DomainError(kModule, "critical value must be positive");
    if (!(delta >= 0.0)) throw DomainError(kModule, "noncentrality must be nonnegative");
    return 1.0 - normal_cdf(std::sqrt(b) - delta);
}

double power_unrestricted_exact(double delta, int df, double b1) {
    if (df < 1) throw DomainError(kModule, "degrees of freedom must be positive");
    if (!(b1 > 0.0)) throw DomainError(kModule, "critical value must be positive");
    if (!(delta >= 0.0)) throw DomainError(kModule, "noncentrality must be nonnegative");
    const double lambda = 0.5 * delta * delta;
    double pmf = std::exp(-lambda);
    double mass = 0.0, total = 0.0;
    for (int j = 0; j < 100000; ++j) {
        if (j > 0) pmf *= lambda / j;
        total += pmf * boost::math::gamma_q(0.5 * df + j, 0.5 * b1);
        mass += pmf;
        if (1.0 - mass < 1e-12 && j > lambda) break;
    }
    return total;
}

double noncentrality(const CanonicalCone& canon, const HypothesisSpec& spec,
                     const Eigen::VectorXd& u_star) {
    if (u_star.size() != spec.d) throw DimensionError(kModule, "u_star must be a d-vector");
    if (!spec.n_cone().contains(u_star, 1e-9))
        throw ConstraintError(kModule, "u_star lies outside the cone N");
    return (canon.h_matrix * u_star).norm();
}

PowerSpec make_power_spec(const CanonicalCone& canon, const HypothesisSpec& spec,
                          const Eigen::VectorXd& u_star, int df, double b1, double b2) {
    PowerSpec ps;
    ps.delta = noncentrality(canon, spec, u_star);
    ps.df = df;
    ps.b1 = b1;
    ps.b2 = b2;
    ps.u_star = u_star;
    return ps;
}

PowerTable reproduce_table1(const std::vector<double>& delta_grid, double b1, double b2, int df) {
    PowerTable t;
    t.b1 = b1;
    t.b2 = b2;
    t.df = df;
    t.delta = delta_grid;
    for (double delta : delta_grid) {
        t.restricted_lower.push_back(power_lower_bound(delta, b2));
        t.unrestricted_exact.push_back(power_unrestricted_exact(delta, df, b1));
        t.unrestricted_lower.push_back(power_lower_bound(delta, b1));
    }
    return t;
}

std::string format_power_table(const PowerTable& t) {
    std::string out;
    char buf[64];
    out += "                    delta";
    for (double d : t.delta) {
        std::snprintf(buf, sizeof buf, " %7.2f", d);
        out += buf;
    }
    out += "\n";
    auto row = [&](const char* label, const std::vector<double>& v) {
        std::snprintf(buf, sizeof buf, "%-25s", label);
        out += buf;
        for (double x : v) {
            std::snprintf(buf, sizeof buf, " %7.3f", x);
            out += buf;
        }
        out += "\n";
    };
    row("S_N   lower bound", t.restricted_lower);
    row("S_N*  exact", t.unrestricted_exact);
    row("S_N*  lower bound", t.unrestricted_lower);
    return out;
}

}  // namespace coneinfer
