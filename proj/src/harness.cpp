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

#include "coneinfer/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "coneinfer/errors.hpp"
#include "coneinfer/parallel.hpp"

namespace coneinfer {

using nlohmann::json;

namespace {

constexpr const char* kModule = "cli_harness";

// Allowed keys per config section; a section name maps to its children.
const std::map<std::string, std::set<std::string>>& allowed_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"", {"link", "basis", "csv", "hypothesis", "solver", "alpha", "weights", "power",
              "simulation", "schema", "$schema"}},
        {"csv", {"subject", "time", "response", "covariates", "group"}},
        {"hypothesis", {"kind", "groups", "nuisance", "constraint_basis", "null_basis", "generators"}},
        {"solver", {"max_iter", "tol", "ridge", "max_halvings", "start"}},
        {"weights", {"route", "phi", "cone", "j_hat", "m", "q", "method", "replicates", "seed",
                     "quadrature"}},
        {"weights.quadrature", {"nodes", "coarse_nodes", "rel_tol"}},
        {"weights.cone", {"dim", "generators", "halfspaces"}},
        {"power", {"delta_grid", "b1", "b2", "df", "u_star"}},
        {"simulation", {"gamma", "link", "correlation", "rho", "noise_scale", "n_subjects",
                        "n_times", "design", "replicates", "alphas", "tail_points",
                        "dataset_out"}},
        {"simulation.design", {"kind", "groups", "per_group", "intercept"}},
    };
    return keys;
}

void collect_unknown(const json& j, const std::string& path, std::vector<std::string>& bad) {
    const auto& table = allowed_keys();
    const auto it = table.find(path);
    if (it == table.end() || !j.is_object()) return;
    for (const auto& [key, value] : j.items()) {
        const std::string full = path.empty() ? key : path + "." + key;
        if (!it->second.count(key)) {
            bad.push_back(full);
            continue;
        }
        collect_unknown(value, full, bad);
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
    return j.at(key).get<T>();
}

const json& require(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key))
        throw ConfigError(kModule, "missing key '" + std::string(key) + "' in " + where, {key});
    return j.at(key);
}

Eigen::VectorXd to_vector(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Array of rows.
Eigen::MatrixXd to_matrix(const json& j) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty()) return {};
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) throw ConfigError(kModule, "ragged matrix in config");
        for (std::size_t k = 0; k < rows[i].size(); ++k) m(i, k) = rows[i][k];
    }
    return m;
}

// List of vectors, stored as matrix columns.
Eigen::MatrixXd columns_from(const json& j, int dim) {
    const auto cols = j.get<std::vector<std::vector<double>>>();
    Eigen::MatrixXd m(dim, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
        if (static_cast<int>(cols[k].size()) != dim)
            throw DimensionError(kModule, "vector of length " + std::to_string(cols[k].size()) +
                                              " where " + std::to_string(dim) + " was expected");
        for (int i = 0; i < dim; ++i) m(i, k) = cols[k][i];
    }
    return m;
}

json vec_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(std::isfinite(v(i)) ? json(v(i)) : json());
    return out;
}

json mat_json(const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vec_json(m.row(i).transpose()));
    return out;
}

json cols_json(const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) out.push_back(vec_json(m.col(k)));
    return out;
}

json num(double x) { return std::isfinite(x) ? json(x) : json(); }

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(kModule, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CsvSchema parse_csv_schema(const json& j) {
    CsvSchema s;
    if (!j.is_object()) return s;
    s.subject = get_or<std::string>(j, "subject", s.subject);
    s.time = get_or<std::string>(j, "time", s.time);
    s.response = get_or<std::string>(j, "response", s.response);
    s.covariates = get_or<std::vector<std::string>>(j, "covariates", {});
    if (j.contains("group") && !j.at("group").is_null()) s.group = j.at("group").get<std::string>();
    return s;
}

WeightOptions parse_weight_options(const json& j, std::uint64_t seed, int jobs) {
    WeightOptions w;
    w.seed = seed;
    w.jobs = jobs;
    if (!j.is_object()) return w;
    w.route = weight_route_from_name(get_or<std::string>(j, "route", "auto"));
    w.replicates = get_or<int>(j, "replicates", w.replicates);
    w.seed = get_or<std::uint64_t>(j, "seed", seed);
    if (j.contains("quadrature")) {
        const json& q = j.at("quadrature");
        w.quadrature.nodes = get_or<int>(q, "nodes", w.quadrature.nodes);
        w.quadrature.coarse_nodes = get_or<int>(q, "coarse_nodes", w.quadrature.coarse_nodes);
        w.quadrature.rel_tol = get_or<double>(q, "rel_tol", w.quadrature.rel_tol);
    }
    if (w.replicates < 1) throw ConfigError(kModule, "weights.replicates must be positive");
    return w;
}

std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t k) {
    return splitmix64(seed ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
}

Eigen::MatrixXd level_q(const json& w, int m) {
    if (!w.contains("q")) return Eigen::MatrixXd::Identity(m, m);
    const json& q = w.at("q");
    if (q.is_array() && !q.empty() && q.front().is_number()) {
        const Eigen::VectorXd diag = to_vector(q);
        if (diag.size() != m) throw DimensionError(kModule, "weights.q must have m entries");
        return diag.asDiagonal();
    }
    return to_matrix(q);
}

json run_weights(const json& config, std::uint64_t seed, int jobs) {
    const json w = config.value("weights", json::object());
    const WeightOptions opts = parse_weight_options(w, seed, jobs);
    json out;
    ChiBarWeights weights;
    if (opts.route == WeightRoute::ClosedForm && w.contains("phi")) {
        weights = weights_closed_form_d2(w.at("phi").get<double>());
    } else if (w.contains("m") && !config.contains("hypothesis") && !w.contains("cone")) {
        if (opts.route == WeightRoute::ClosedForm || opts.route == WeightRoute::Tube)
            throw ConfigError(kModule, "weights.m supports only the auto, level_prob and monte_carlo routes",
                              {"weights.route"});
        const int m = w.at("m").get<int>();
        const std::string method =
            opts.route == WeightRoute::MonteCarlo
                ? "monte_carlo"
                : get_or<std::string>(w, "method", m <= 4 ? "exact" : "monte_carlo");
        if (method != "exact" && method != "monte_carlo")
            throw ConfigError(kModule, "weights.method must be exact or monte_carlo", {"weights.method"});
        weights = level_probabilities(m, level_q(w, m),
                                      method == "exact" ? LevelMethod::ExactSmallM
                                                        : LevelMethod::MonteCarlo,
                                      opts.replicates, opts.seed, opts.jobs);
    } else if (w.contains("cone")) {
        const PolyhedralCone cone = parse_cone(w.at("cone"));
        out["cone"] = cone_to_json(cone);
        const int d = cone.dim();
        WeightRoute route = opts.route;
        if (route == WeightRoute::Auto)
            route = (d == 2 && cone.generators().cols() == 2) ? WeightRoute::ClosedForm
                                                              : WeightRoute::Tube;
        switch (route) {
            case WeightRoute::ClosedForm: {
                if (d != 2 || cone.generators().cols() != 2)
                    throw DimensionError(kModule, "closed-form weights need a planar cone with two generators");
                const double c = std::clamp(cone.generators().col(0).normalized().dot(
                                                cone.generators().col(1).normalized()),
                                            -1.0, 1.0);
                weights = weights_closed_form_d2(std::acos(c));
                break;
            }
            case WeightRoute::Tube:
                try {
                    weights = weights_tube(geometric_constants(ManifoldGeometry(cone), opts.quadrature), d);
                } catch (const Error&) {
                    if (opts.route == WeightRoute::Tube) throw;
                    weights = weights_monte_carlo(cone, opts.replicates, opts.seed, opts.jobs);
                }
                break;
            case WeightRoute::MonteCarlo:
                weights = weights_monte_carlo(cone, opts.replicates, opts.seed, opts.jobs);
                break;
            default:
                throw ConfigError(kModule, "level-probability weights need weights.m or an order-cone hypothesis");
        }
    } else if (config.contains("hypothesis")) {
        const HypothesisSpec spec = parse_hypothesis(config.at("hypothesis"));
        const Eigen::MatrixXd j = w.contains("j_hat") ? to_matrix(w.at("j_hat"))
                                                      : Eigen::MatrixXd::Identity(spec.r, spec.r);
        const CanonicalCone canon = canonicalize(spec, j);
        out["cone"] = cone_to_json(canon.intrinsic_cone());
        if (canon.d() == 2 && canon.generators_embedded.cols() == 2) out["angle"] = cone_angle(canon);
        weights = chibar_weights(spec, canon, j, opts);
    } else {
        throw ConfigError(kModule, "weights needs phi, m, cone or a hypothesis", {"weights"});
    }
    out["weights"] = to_json(weights);
    return out;
}

json run_power(const json& config) {
    const json p = config.value("power", json::object());
    const auto grid = get_or<std::vector<double>>(p, "delta_grid", {0, 1, 2, 3, 4, 5});
    const double b1 = get_or<double>(p, "b1", 5.991);
    const double b2 = get_or<double>(p, "b2", 3.820);
    const int df = get_or<int>(p, "df", 2);
    const PowerTable table = reproduce_table1(grid, b1, b2, df);
    json out = to_json(table);
    out["text"] = format_power_table(table);
    if (p.contains("u_star")) {
        const HypothesisSpec spec = parse_hypothesis(require(config, "hypothesis", "config"));
        const CanonicalCone canon = canonicalize(spec, Eigen::MatrixXd::Identity(spec.r, spec.r));
        const PowerSpec ps = make_power_spec(canon, spec, to_vector(p.at("u_star")), df, b1, b2);
        out["local_alternative"] = {
            {"u_star", vec_json(ps.u_star)},
            {"delta", ps.delta},
            {"s_n_lower", power_lower_bound(ps.delta, b2)},
            {"s_n_star_exact", power_unrestricted_exact(ps.delta, df, b1)},
            {"s_n_star_lower", power_lower_bound(ps.delta, b1)}};
    }
    return out;
}

}  // namespace

Command command_from_name(std::string_view name) {
    if (name == "fit") return Command::Fit;
    if (name == "test") return Command::Test;
    if (name == "weights") return Command::Weights;
    if (name == "power") return Command::Power;
    if (name == "simulate") return Command::Simulate;
    throw ConfigError(kModule, "unknown command '" + std::string(name) + "'");
}

std::string_view command_name(Command command) noexcept {
    switch (command) {
        case Command::Fit: return "fit";
        case Command::Test: return "test";
        case Command::Weights: return "weights";
        case Command::Power: return "power";
        case Command::Simulate: return "simulate";
    }
    return "fit";
}

const char* version() noexcept { return CONEINFER_VERSION; }

json Report::to_json() const {
    return {{"command", command},
            {"inputs_digest", inputs_digest},
            {"results", results},
            {"version", version},
            {"timing", timing}};
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void check_config_keys(const json& config) {
    if (!config.is_object()) throw ConfigError(kModule, "config must be a JSON object");
    std::vector<std::string> bad;
    collect_unknown(config, "", bad);
    if (!bad.empty()) {
        std::string msg = "unknown config keys:";
        for (const auto& k : bad) msg += " " + k;
        throw ConfigError(kModule, msg, bad);
    }
}

HypothesisSpec parse_hypothesis(const json& j) {
    if (!j.is_object()) throw ConfigError(kModule, "hypothesis must be an object", {"hypothesis"});
    const std::string kind = get_or<std::string>(j, "kind", "order_cone");
    if (kind == "order_cone")
        return order_cone(require(j, "groups", "hypothesis").get<int>(), get_or<int>(j, "nuisance", 0));
    if (kind != "explicit")
        throw ConfigError(kModule, "hypothesis.kind must be order_cone or explicit", {"hypothesis.kind"});
    const Eigen::MatrixXd p = to_matrix(require(j, "constraint_basis", "hypothesis"));
    const Eigen::MatrixXd gens = columns_from(require(j, "generators", "hypothesis"),
                                              static_cast<int>(p.cols()));
    const Eigen::MatrixXd null = j.contains("null_basis") ? to_matrix(j.at("null_basis"))
                                                          : Eigen::MatrixXd();
    return make_hypothesis(p, gens, null);
}

SolverOptions parse_solver(const json& j) {
    SolverOptions s;
    if (!j.is_object()) return s;
    s.max_iter = get_or<int>(j, "max_iter", s.max_iter);
    s.tol = get_or<double>(j, "tol", s.tol);
    s.ridge = get_or<double>(j, "ridge", s.ridge);
    s.max_halvings = get_or<int>(j, "max_halvings", s.max_halvings);
    if (j.contains("start") && !j.at("start").is_null()) s.start = to_vector(j.at("start"));
    if (s.max_iter < 1 || !(s.tol > 0.0) || s.ridge < 0.0 || s.max_halvings < 0)
        throw ConfigError(kModule, "invalid solver settings", {"solver"});
    return s;
}

GeneratorConfig parse_generator(const json& j) {
    GeneratorConfig g;
    g.gamma = to_vector(require(j, "gamma", "simulation"));
    g.link = LinkFunction::from_name(get_or<std::string>(j, "link", "identity")).kind();
    g.correlation = correlation_kind_from_name(get_or<std::string>(j, "correlation", "exchangeable"));
    g.rho = get_or<double>(j, "rho", g.rho);
    g.noise_scale = get_or<double>(j, "noise_scale", g.noise_scale);
    g.n_subjects = get_or<int>(j, "n_subjects", g.n_subjects);
    g.n_times = get_or<int>(j, "n_times", g.n_times);
    if (j.contains("design")) {
        const json& d = j.at("design");
        const std::string kind = get_or<std::string>(d, "kind", "group");
        if (kind == "group") g.design.kind = CovariateDesign::Kind::Group;
        else if (kind == "gaussian") g.design.kind = CovariateDesign::Kind::Gaussian;
        else throw ConfigError(kModule, "simulation.design.kind must be group or gaussian",
                               {"simulation.design.kind"});
        g.design.groups = get_or<int>(d, "groups", g.design.groups);
        g.design.per_group = get_or<int>(d, "per_group", g.design.per_group);
        g.design.intercept = get_or<bool>(d, "intercept", g.design.intercept);
    }
    return g;
}

CalibrationConfig parse_calibration(const json& config) {
    const json& sim = require(config, "simulation", "config");
    CalibrationConfig c;
    json gen = sim;
    if (!gen.contains("link") && config.contains("link")) gen["link"] = config.at("link");
    c.generator = parse_generator(gen);
    c.link = LinkFunction::from_name(get_or<std::string>(config, "link", "identity")).kind();
    c.basis = basis_kind_from_name(get_or<std::string>(config, "basis", "exchangeable"));
    c.hypothesis = parse_hypothesis(require(config, "hypothesis", "config"));
    c.replicates = get_or<int>(sim, "replicates", c.replicates);
    c.alphas = get_or<std::vector<double>>(sim, "alphas", c.alphas);
    c.tail_points = get_or<std::vector<double>>(sim, "tail_points", c.tail_points);
    c.solver = parse_solver(config.value("solver", json::object()));
    c.weights = parse_weight_options(config.value("weights", json::object()), 0, 1);
    if (c.replicates < 100)
        throw ConfigError(kModule, "simulation.replicates must be at least 100",
                          {"simulation.replicates"});
    for (double a : c.alphas)
        if (!(a > 0.0 && a < 1.0))
            throw ConfigError(kModule, "simulation.alphas must lie in (0, 1)", {"simulation.alphas"});
    for (double t : c.tail_points)
        if (!(t >= 0.0))
            throw ConfigError(kModule, "simulation.tail_points must be nonnegative",
                              {"simulation.tail_points"});
    return c;
}

PolyhedralCone parse_cone(const json& j) {
    if (j.is_string()) {
        json file;
        try {
            file = json::parse(read_file(j.get<std::string>()));
        } catch (const json::exception& e) {
            throw ConfigError(kModule, std::string("cone file: ") + e.what());
        }
        std::vector<std::string> bad;
        collect_unknown(file, "weights.cone", bad);
        if (!bad.empty()) throw ConfigError(kModule, "unknown keys in cone file", bad);
        return parse_cone(file);
    }
    const bool has_g = j.contains("generators"), has_h = j.contains("halfspaces");
    // dim may be left out when the vectors themselves fix it
    int dim = 0;
    if (j.contains("dim")) {
        dim = j.at("dim").get<int>();
    } else {
        const json& first = has_g ? j.at("generators") : has_h ? j.at("halfspaces") : json();
        if (!first.is_array() || first.empty() || !first.front().is_array())
            throw ConfigError(kModule, "missing key 'dim' in cone", {"cone.dim"});
        dim = static_cast<int>(first.front().size());
    }
    if (has_g && has_h)
        return PolyhedralCone::from_both(columns_from(j.at("generators"), dim),
                                         columns_from(j.at("halfspaces"), dim));
    if (has_g) return PolyhedralCone::from_generators(columns_from(j.at("generators"), dim));
    if (has_h) return PolyhedralCone::from_halfspaces(columns_from(j.at("halfspaces"), dim), dim);
    throw ConfigError(kModule, "cone needs generators or halfspaces", {"cone"});
}

json cone_to_json(const PolyhedralCone& cone) {
    json out{{"dim", cone.dim()}};
    if (cone.has_generators()) out["generators"] = cols_json(cone.generators());
    if (cone.has_halfspaces()) out["halfspaces"] = cols_json(cone.halfspaces());
    return out;
}

json to_json(const QifFit& fit) {
    auto comp = [](const FitComponent& c) {
        return json{{"iterations", c.iterations}, {"gradient_norm", num(c.gradient_norm)}};
    };
    return {{"gamma_hat", vec_json(fit.gamma_hat())},
            {"gamma_tilde", vec_json(fit.gamma_tilde())},
            {"gamma_bar", vec_json(fit.gamma_bar())},
            {"q_values",
             {{"unrestricted", num(fit.unrestricted.q)}, {"cone", num(fit.cone.q)}, {"null", num(fit.null.q)}}},
            {"j_hat", mat_json(fit.j_hat)},
            {"cov_hat", mat_json(fit.cov_hat)},
            {"j_invertible", fit.j_invertible},
            {"n_subjects", fit.n_subjects},
            {"convergence",
             {{"unrestricted", comp(fit.unrestricted)}, {"cone", comp(fit.cone)}, {"null", comp(fit.null)}}}};
}

json to_json(const ChiBarWeights& w) {
    json out{{"d", w.d},
             {"source", std::string(weight_source_name(w.source))},
             {"weights", vec_json(w.weights)},
             {"stderr", w.mc_stderr ? vec_json(*w.mc_stderr) : json::array()},
             {"constants", json::object()},
             {"critical_radius_convex", w.critical_radius_convex}};
    if (w.constants) {
        const auto& k = *w.constants;
        out["constants"] = {{"kappa0", k.kappa0},     {"kappa2", k.kappa2},   {"ell0", k.ell0},
                            {"ell1", k.ell1},         {"ell2", k.ell2},       {"upsilon0", k.upsilon0},
                            {"upsilon1", k.upsilon1}, {"tau", k.tau},         {"omega", k.omega},
                            {"euler_characteristic", k.euler_characteristic}};
    }
    return out;
}

json to_json(const TestResult& r) {
    return {{"s_n", num(r.s_n)},
            {"s_n_star", num(r.s_n_star)},
            {"p_value", num(r.p_value)},
            {"alpha", r.alpha},
            {"critical_value", num(r.critical_value)},
            {"weights", to_json(r.weights_used)},
            {"fit", to_json(r.fit)},
            {"canonical",
             {{"h_matrix", mat_json(r.canon.h_matrix)},
              {"omega", mat_json(r.canon.omega)},
              {"generators_embedded", cols_json(r.canon.generators_embedded)}}},
            {"projection_diag", num(r.projection_diag)},
            {"projection_warning", r.projection_warning}};
}

json to_json(const PowerTable& t) {
    return {{"delta", t.delta},
            {"b1", t.b1},
            {"b2", t.b2},
            {"df", t.df},
            {"rows",
             {{"s_n_lower", t.restricted_lower},
              {"s_n_star_exact", t.unrestricted_exact},
              {"s_n_star_lower", t.unrestricted_lower}}}};
}

json to_json(const CalibrationResult& r) {
    json rates = json::array();
    for (std::size_t i = 0; i < r.alphas.size(); ++i)
        rates.push_back({{"alpha", r.alphas[i]}, {"rejections", r.rejections[i]}, {"rate", num(r.rejection_rates[i])}});
    json tails = json::array();
    for (std::size_t i = 0; i < r.tail_points.size(); ++i)
        tails.push_back({{"c", r.tail_points[i]},
                         {"empirical", num(r.empirical_tail[i])},
                         {"chibar", num(r.analytic_tail[i])},
                         {"deviation", num(std::abs(r.empirical_tail[i] - r.analytic_tail[i]))}});
    return {{"replicates", r.replicates},
            {"failures", r.failures},
            {"rejection", rates},
            {"tails", tails},
            {"max_tail_deviation", num(r.max_tail_deviation)},
            {"median_projection_diag", num(r.median_projection_diag)}};
}

CalibrationResult calibration_study(const CalibrationConfig& config, std::uint64_t seed, int jobs) {
    if (config.replicates < 100)
        throw ConfigError(kModule, "calibration needs at least 100 replicates", {"simulation.replicates"});
    const int reps = config.replicates;
    const LinkFunction link(config.link);
    const CorrelationBasis basis = make_basis(config.basis, config.generator.n_times);
    const std::size_t n_tail = config.tail_points.size();

    std::vector<double> stat(reps, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> pval(reps, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> diag(reps, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::vector<double>> tails(reps, std::vector<double>(n_tail, 0.0));
    std::vector<std::string> first_error(reps);

    parallel_for(reps, jobs, [&](int k) {
        const std::uint64_t s = replicate_seed(seed, static_cast<std::uint64_t>(k));
        const LongitudinalDataset data = simulate_dataset(config.generator, s);
        WeightOptions w = config.weights;
        w.seed = s;
        w.jobs = 1;
        try {
            const TestResult r = run_test(data, link, basis, config.hypothesis,
                                          config.alphas.empty() ? 0.05 : config.alphas.front(), w,
                                          config.solver);
            stat[k] = r.s_n;
            pval[k] = r.p_value;
            diag[k] = r.projection_diag;
            for (std::size_t t = 0; t < n_tail; ++t)
                tails[k][t] = chibar_tail(r.weights_used, config.tail_points[t]);
        } catch (const ConvergenceError& e) {
            first_error[k] = e.what();
        }
    });

    CalibrationResult out;
    out.replicates = reps;
    out.alphas = config.alphas;
    out.tail_points = config.tail_points;
    out.statistics = stat;
    std::vector<double> diags;
    int used = 0;
    for (int k = 0; k < reps; ++k) {
        if (std::isnan(stat[k])) {
            ++out.failures;
            continue;
        }
        ++used;
        diags.push_back(diag[k]);
    }
    if (used == 0) throw ConvergenceError(kModule, "every calibration replicate failed: " + first_error[0], {}, 0.0);
    for (double a : config.alphas) {
        long long rej = 0;
        for (int k = 0; k < reps; ++k)
            if (!std::isnan(pval[k]) && pval[k] <= a) ++rej;
        out.rejections.push_back(rej);
        out.rejection_rates.push_back(static_cast<double>(rej) / used);
    }
    for (std::size_t t = 0; t < n_tail; ++t) {
        long long hit = 0;
        double analytic = 0.0;
        for (int k = 0; k < reps; ++k) {
            if (std::isnan(stat[k])) continue;
            if (stat[k] >= config.tail_points[t]) ++hit;
            analytic += tails[k][t];
        }
        out.empirical_tail.push_back(static_cast<double>(hit) / used);
        out.analytic_tail.push_back(analytic / used);
        out.max_tail_deviation =
            std::max(out.max_tail_deviation, std::abs(out.empirical_tail.back() - out.analytic_tail.back()));
    }
    std::sort(diags.begin(), diags.end());
    const std::size_t n = diags.size();
    out.median_projection_diag = n % 2 ? diags[n / 2] : 0.5 * (diags[n / 2 - 1] + diags[n / 2]);
    return out;
}

Report run_json(Command command, const json& config, const std::optional<std::string>& data_path,
                std::uint64_t seed, int jobs) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    auto ms = [](clock::time_point a, clock::time_point b) {
        return std::chrono::duration<double, std::milli>(b - a).count();
    };
    check_config_keys(config);
    jobs = std::max(1, jobs);

    Report rep;
    rep.command = std::string(command_name(command));
    rep.version = version();
    std::string data_bytes;
    const bool needs_data = command == Command::Fit || command == Command::Test;
    if (needs_data) {
        if (!data_path) throw ConfigError(kModule, rep.command + " requires a data file", {"data"});
        data_bytes = read_file(*data_path);
    }
    rep.inputs_digest = fnv1a_hex(rep.command + "\n" + config.dump() + "\n" + data_bytes + "\n" +
                                  std::to_string(seed));

    try {
        switch (command) {
            case Command::Fit:
            case Command::Test: {
                const LongitudinalDataset data =
                    parse_dataset(data_bytes, parse_csv_schema(config.value("csv", json::object())));
                const auto t1 = clock::now();
                const LinkFunction link = LinkFunction::from_name(get_or<std::string>(config, "link", "identity"));
                const CorrelationBasis basis = make_basis(
                    basis_kind_from_name(get_or<std::string>(config, "basis", "exchangeable")), data.n_times());
                const HypothesisSpec spec = parse_hypothesis(require(config, "hypothesis", "config"));
                const SolverOptions solver = parse_solver(config.value("solver", json::object()));
                if (command == Command::Fit) {
                    rep.results = to_json(fit_all(data, link, basis, spec, solver));
                } else {
                    const double alpha = get_or<double>(config, "alpha", 0.05);
                    const WeightOptions w =
                        parse_weight_options(config.value("weights", json::object()), seed, jobs);
                    rep.results = to_json(run_test(data, link, basis, spec, alpha, w, solver));
                }
                rep.timing = {{"load_ms", ms(t0, t1)}, {"compute_ms", ms(t1, clock::now())}};
                break;
            }
            case Command::Weights:
                rep.results = run_weights(config, seed, jobs);
                break;
            case Command::Power:
                rep.results = run_power(config);
                break;
            case Command::Simulate: {
                const CalibrationConfig cal = parse_calibration(config);
                rep.results = to_json(calibration_study(cal, seed, jobs));
                const json& sim = config.at("simulation");
                if (sim.contains("dataset_out")) {
                    const std::string path = sim.at("dataset_out").get<std::string>();
                    write_dataset(simulate_dataset(cal.generator, replicate_seed(seed, 0)), path);
                    rep.results["dataset_out"] = path;
                }
                break;
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(kModule, std::string("invalid config value: ") + e.what());
    }
    if (rep.timing.is_null()) rep.timing = json::object();
    rep.timing["total_ms"] = ms(t0, clock::now());
    return rep;
}

Report run(const RunConfig& config) {
    json parsed;
    try {
        parsed = json::parse(read_file(config.config_path));
    } catch (const json::exception& e) {
        throw ConfigError(kModule, std::string("config is not valid JSON: ") + e.what());
    }
    Report rep = run_json(config.command, parsed, config.data_path, config.seed, config.parallelism);
    if (config.output_path) {
        std::ofstream out(*config.output_path);
        if (!out) throw IoError(kModule, "cannot write '" + *config.output_path + "'");
        out << rep.to_json().dump(2) << "\n";
    }
    return rep;
}

}  // namespace coneinfer
