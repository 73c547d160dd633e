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

#include "coneinfer/tube_weights.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

#include "coneinfer/errors.hpp"
#include "coneinfer/linalg.hpp"
#include "coneinfer/parallel.hpp"

namespace coneinfer {

namespace {

constexpr const char* kModule = "tube_weights";
constexpr double kPi = std::numbers::pi;
constexpr int kChunk = 10000;

ChiBarWeights from_counts(const std::vector<long long>& counts, long long total, int d,
                          WeightSource source) {
    ChiBarWeights out;
    out.d = d;
    out.source = source;
    out.weights.resize(d + 1);
    Eigen::VectorXd se(d + 1);
    for (int k = 0; k <= d; ++k) {
        const double p = static_cast<double>(counts[k]) / static_cast<double>(total);
        out.weights(k) = p;
        se(k) = std::sqrt(p * (1.0 - p) / static_cast<double>(total));
    }
    out.mc_stderr = se;
    return out;
}

// Runs `per_chunk(rng, n, counts)` over fixed-size chunks, chunk c drawing
// from substream c, and sums the counts in chunk order.
std::vector<long long> chunked_counts(
    int replicates, std::uint64_t seed, int jobs, int bins,
    const std::function<void(std::mt19937_64&, int, std::vector<long long>&)>& per_chunk) {
    const int n_chunks = (replicates + kChunk - 1) / kChunk;
    std::vector<std::vector<long long>> parts(n_chunks, std::vector<long long>(bins, 0));
    parallel_for(n_chunks, jobs, [&](int c) {
        std::mt19937_64 rng = substream(seed, static_cast<std::uint64_t>(c));
        const int n = std::min(kChunk, replicates - c * kChunk);
        per_chunk(rng, n, parts[c]);
    });
    std::vector<long long> total(bins, 0);
    for (const auto& p : parts)
        for (int b = 0; b < bins; ++b) total[b] += p[b];
    return total;
}

void check_level_matrix(int m, const Eigen::MatrixXd& q) {
    if (m < 2) throw DimensionError(kModule, "level probabilities need m >= 2");
    if (q.rows() != m || q.cols() != m) throw MatrixError(kModule, "Q must be m x m");
    const double scale = q.diagonal().cwiseAbs().maxCoeff();
    for (int i = 0; i < m; ++i) {
        if (!(q(i, i) > 0.0) || !std::isfinite(q(i, i)))
            throw MatrixError(kModule, "Q must have a positive diagonal");
        for (int j = 0; j < m; ++j)
            if (i != j && std::abs(q(i, j)) > 1e-8 * scale)
                throw MatrixError(kModule, "Q must be diagonal");
    }
}

// P(Z_1 > ... > Z_k) for independent Z_t with variances v_t.
double orthant(const std::vector<double>& v) {
    const auto k = v.size();
    auto rho = [&](std::size_t t) {  // correlation of Z_t - Z_{t+1} and Z_{t+1} - Z_{t+2}
        return -v[t + 1] / std::sqrt((v[t] + v[t + 1]) * (v[t + 1] + v[t + 2]));
    };
    switch (k) {
        case 1: return 1.0;
        case 2: return 0.5;
        case 3: return 0.25 + std::asin(rho(0)) / (2.0 * kPi);
        case 4: return 0.125 + (std::asin(rho(0)) + std::asin(rho(1))) / (4.0 * kPi);
        default: throw DimensionError(kModule, "exact level probabilities need m <= 4");
    }
}

// p(l, k; w) for the simple order with precision weights w.
double level_prob(int l, const std::vector<double>& w) {
    const int k = static_cast<int>(w.size());
    if (l < 1 || l > k) return 0.0;
    if (l == k) {
        std::vector<double> v(k);
        for (int t = 0; t < k; ++t) v[t] = 1.0 / w[t];
        return orthant(v);
    }
    if (l == 1) {
        double rest = 0.0;
        for (int j = 2; j <= k; ++j) rest += level_prob(j, w);
        return 1.0 - rest;
    }
    // Sum over splits of 1..k into l consecutive blocks.
    double total = 0.0;
    std::vector<int> cuts(l - 1);
    std::function<void(int, int)> rec = [&](int idx, int start) {
        if (idx == l - 1) {
            std::vector<double> pooled;
            double prod = 1.0;
            int begin = 0;
            for (int b = 0; b < l; ++b) {
                const int end = b < l - 1 ? cuts[b] : k;
                std::vector<double> block(w.begin() + begin, w.begin() + end);
                prod *= level_prob(1, block);
                double sum = 0.0;
                for (double x : block) sum += x;
                pooled.push_back(1.0 / sum);
                begin = end;
            }
            total += prod * orthant(pooled);
            return;
        }
        for (int c = start; c <= k - (l - 1 - idx); ++c) {
            cuts[idx] = c;
            rec(idx + 1, c + 1);
        }
    };
    rec(0, 1);
    return total;
}

// Projector onto the orthogonal complement of col(a), applied to v, normalized.
Eigen::VectorXd normal_from_span(const Eigen::MatrixXd& a, const Eigen::VectorXd& v) {
    Eigen::VectorXd out = v - linalg::projector(a) * v;
    const double n = out.norm();
    if (!(n > 1e-14)) throw DimensionError(kModule, "degenerate face normal");
    return out / n;
}

Eigen::MatrixXd columns(const Eigen::MatrixXd& g, const std::vector<int>& idx) {
    Eigen::MatrixXd out(g.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out.col(j) = g.col(idx[j]);
    return out;
}

// Integrate f over [0, 1]^k on a tensor Gauss-Legendre grid.
double integrate_cube(int k, int n, const std::function<double(const Eigen::VectorXd&)>& f) {
    if (k == 0) return f(Eigen::VectorXd(0));
    std::vector<double> x, w;
    gauss_legendre(n, x, w);
    std::vector<int> idx(k, 0);
    Eigen::VectorXd c(k);
    double total = 0.0;
    while (true) {
        double weight = 1.0;
        for (int j = 0; j < k; ++j) {
            c(j) = x[idx[j]];
            weight *= w[idx[j]];
        }
        total += weight * f(c);
        int pos = k - 1;
        while (pos >= 0 && ++idx[pos] == n) idx[pos--] = 0;
        if (pos < 0) break;
    }
    return total;
}

double sqrt_gram_det(const Eigen::MatrixXd& s) {
    if (s.cols() == 0) return 1.0;
    return std::sqrt(std::max(0.0, (s.transpose() * s).determinant()));
}

// Extrinsic scalar curvature term of the patch: sum over ordered pairs
// k != l of v_kk . v_ll - v_kl . v_lk, where v_lk is the normal part (in the
// ambient space) of sum_m (S^T S)^{-1}_{lm} T_mk.
double upsilon(const ManifoldGeometry::Point& p) {
    const auto k = p.s.cols();
    if (k < 2) return 0.0;
    const Eigen::MatrixXd ginv = (p.s.transpose() * p.s).inverse();
    const Eigen::Index dim = p.s.rows();
    const Eigen::MatrixXd normal =
        Eigen::MatrixXd::Identity(dim, dim) - p.s * ginv * p.s.transpose();
    std::vector<std::vector<Eigen::VectorXd>> v(k, std::vector<Eigen::VectorXd>(k));
    for (Eigen::Index l = 0; l < k; ++l)
        for (Eigen::Index kk = 0; kk < k; ++kk) {
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
            for (Eigen::Index m = 0; m < k; ++m) acc += ginv(l, m) * p.second[m].col(kk);
            v[l][kk] = normal * acc;
        }
    double total = 0.0;
    for (Eigen::Index kk = 1; kk < k; ++kk)
        for (Eigen::Index l = 0; l < kk; ++l)
            total += v[kk][kk].dot(v[l][l]) - v[kk][l].dot(v[l][kk]);
    return 2.0 * total;
}

// -sum_k e_k^T (S^T S)^{-1} (d S^T / d rho_k) b
double boundary_rotation(const ManifoldGeometry::Point& p, const Eigen::VectorXd& b) {
    const auto k = p.s.cols();
    if (k == 0) return 0.0;
    const Eigen::MatrixXd ginv = (p.s.transpose() * p.s).inverse();
    double total = 0.0;
    for (Eigen::Index kk = 0; kk < k; ++kk)
        for (Eigen::Index m = 0; m < k; ++m) total += ginv(kk, m) * p.second[m].col(kk).dot(b);
    return -total;
}

// Girard: area of the spherical triangle with unit vertices u.
double spherical_excess(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                        const Eigen::VectorXd& c) {
    auto angle_at = [](const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                       const Eigen::VectorXd& w) {
        const Eigen::VectorXd tv = (v - u.dot(v) * u).normalized();
        const Eigen::VectorXd tw = (w - u.dot(w) * u).normalized();
        return std::acos(std::clamp(tv.dot(tw), -1.0, 1.0));
    };
    return angle_at(a, b, c) + angle_at(b, c, a) + angle_at(c, a, b) - kPi;
}

std::vector<int> complement(int d, const std::vector<int>& face) {
    std::vector<int> out;
    for (int i = 0; i < d; ++i)
        if (std::find(face.begin(), face.end(), i) == face.end()) out.push_back(i);
    return out;
}

GeometricConstants constants_at(const ManifoldGeometry& geom, int n) {
    const int d = geom.d();
    const Eigen::MatrixXd& g = geom.generators();
    GeometricConstants out;
    out.euler_characteristic = geom.euler_characteristic();

    const std::vector<int> all = geom.faces(0).front();
    out.kappa0 = integrate_cube(d - 1, n, [&](const Eigen::VectorXd& c) {
        return sqrt_gram_det(geom.evaluate(all, c).s);
    });
    if (d >= 3)
        out.kappa2 = integrate_cube(d - 1, n, [&](const Eigen::VectorXd& c) {
            const auto p = geom.evaluate(all, c, true);
            return 0.5 * (upsilon(p) - (d - 1.0) * (d - 2.0)) * sqrt_gram_det(p.s);
        });

    if (d >= 2)
        for (const auto& face : geom.faces(1)) {
            const int omitted = complement(d, face).front();
            out.ell0 += integrate_cube(d - 2, n, [&](const Eigen::VectorXd& c) {
                return sqrt_gram_det(geom.evaluate(face, c).s);
            });
            if (d >= 3)
                out.ell1 += integrate_cube(d - 2, n, [&](const Eigen::VectorXd& c) {
                    const auto p = geom.evaluate(face, c, true);
                    // Outward normal, the orientation under which the
                    // boundary term enters Gauss-Bonnet with a plus sign.
                    const Eigen::VectorXd b = -geom.inward_normal(face, omitted, p);
                    return boundary_rotation(p, b) * sqrt_gram_det(p.s);
                });
            if (d >= 4)
                out.ell2 += integrate_cube(d - 2, n, [&](const Eigen::VectorXd& c) {
                    const auto p = geom.evaluate(face, c, true);
                    return 0.5 * (upsilon(p) - (d - 2.0) * (d - 3.0)) * sqrt_gram_det(p.s);
                });
        }

    if (d >= 3)
        for (const auto& ridge : geom.faces(2)) {
            const auto pair = complement(d, ridge);
            const int a = pair[0], b = pair[1];
            auto normals = [&](const ManifoldGeometry::Point& p) {
                // Tangent of the face omitting `a` at p spans T, S and the
                // direction towards b; likewise with a and b swapped.
                Eigen::MatrixXd span_a(d, p.s.cols() + 2), span_b(d, p.s.cols() + 2);
                const Eigen::VectorXd to_b = g.col(b) - p.t.dot(g.col(b)) * p.t;
                const Eigen::VectorXd to_a = g.col(a) - p.t.dot(g.col(a)) * p.t;
                span_a << p.t, p.s, to_b;
                span_b << p.t, p.s, to_a;
                return std::make_pair(normal_from_span(span_a, g.col(a)),
                                      normal_from_span(span_b, g.col(b)));
            };
            out.upsilon0 += integrate_cube(d - 3, n, [&](const Eigen::VectorXd& c) {
                const auto p = geom.evaluate(ridge, c);
                const auto [na, nb] = normals(p);
                return std::acos(std::clamp(na.dot(nb), -1.0, 1.0)) * sqrt_gram_det(p.s);
            });
            if (d >= 4)
                out.upsilon1 += integrate_cube(d - 3, n, [&](const Eigen::VectorXd& c) {
                    const auto p = geom.evaluate(ridge, c, true);
                    const auto [na, nb] = normals(p);
                    const double phi = std::acos(std::clamp(na.dot(nb), -1.0, 1.0));
                    return boundary_rotation(p, -(na + nb)) * std::tan(0.5 * phi) *
                           sqrt_gram_det(p.s);
                });
        }

    if (d >= 4)
        for (const auto& corner : geom.faces(3)) {
            const auto others = complement(d, corner);
            std::vector<Eigen::VectorXd> b;
            for (int j : others) {
                std::vector<int> facet;
                for (int i = 0; i < d; ++i)
                    if (i != j) facet.push_back(i);
                b.push_back(normal_from_span(columns(g, facet), g.col(j)));
            }
            out.tau += spherical_excess(b[0], b[1], b[2]);
        }

    for (int k = 0; k <= d; ++k) out.omega.push_back(sphere_volume(k));
    return out;
}

}  // namespace

std::string_view weight_source_name(WeightSource source) noexcept {
    switch (source) {
        case WeightSource::ClosedForm: return "closed_form";
        case WeightSource::LevelProb: return "level_prob";
        case WeightSource::MonteCarlo: return "monte_carlo";
        case WeightSource::Tube: return "tube";
    }
    return "closed_form";
}

double sphere_volume(int k) {
    if (k < 0) throw DomainError(kModule, "sphere dimension must be nonnegative");
    const double h = 0.5 * (k + 1);
    return 2.0 * std::pow(kPi, h) / std::tgamma(h);
}

ChiBarWeights weights_closed_form_d2(double phi) {
    if (!std::isfinite(phi) || phi < 0.0 || phi > kPi)
        throw DomainError(kModule, "cone angle must lie in [0, pi]");
    ChiBarWeights out;
    out.d = 2;
    out.source = WeightSource::ClosedForm;
    out.weights.resize(3);
    out.weights << 0.5 - phi / (2.0 * kPi), 0.5, phi / (2.0 * kPi);
    return out;
}

Eigen::VectorXd isotonic_decreasing(const Eigen::VectorXd& z, const Eigen::VectorXd& w) {
    if (z.size() != w.size()) throw DimensionError(kModule, "values and weights differ in size");
    struct Block {
        double sum, weight;
        int count;
    };
    std::vector<Block> stack;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        stack.push_back({w(i) * z(i), w(i), 1});
        while (stack.size() > 1) {
            const Block& last = stack.back();
            const Block& prev = stack[stack.size() - 2];
            if (prev.sum / prev.weight > last.sum / last.weight) break;
            Block merged{prev.sum + last.sum, prev.weight + last.weight, prev.count + last.count};
            stack.pop_back();
            stack.back() = merged;
        }
    }
    Eigen::VectorXd out(z.size());
    Eigen::Index pos = 0;
    for (const auto& b : stack)
        for (int j = 0; j < b.count; ++j) out(pos++) = b.sum / b.weight;
    return out;
}

int isotonic_levels(const Eigen::VectorXd& z, const Eigen::VectorXd& w) {
    const Eigen::VectorXd fit = isotonic_decreasing(z, w);
    int levels = fit.size() ? 1 : 0;
    for (Eigen::Index i = 1; i < fit.size(); ++i)
        if (fit(i) != fit(i - 1)) ++levels;
    return levels;
}

ChiBarWeights level_probabilities(int m, const Eigen::MatrixXd& q, LevelMethod method,
                                  int replicates, std::uint64_t seed, int jobs) {
    check_level_matrix(m, q);
    if (method == LevelMethod::ExactSmallM) {
        if (m > 4) throw DimensionError(kModule, "exact level probabilities need m <= 4");
        std::vector<double> w(m);
        for (int t = 0; t < m; ++t) w[t] = 1.0 / q(t, t);
        ChiBarWeights out;
        out.d = m - 1;
        out.source = WeightSource::LevelProb;
        out.weights.resize(m);
        for (int k = 1; k <= m; ++k) out.weights(k - 1) = level_prob(k, w);
        return out;
    }
    if (replicates < 1) throw DomainError(kModule, "replicates must be positive");
    const Eigen::VectorXd sd = q.diagonal().cwiseSqrt();
    const Eigen::VectorXd w = q.diagonal().cwiseInverse();
    const auto counts = chunked_counts(
        replicates, seed, jobs, m, [&](std::mt19937_64& rng, int n, std::vector<long long>& c) {
            std::normal_distribution<double> normal;
            Eigen::VectorXd z(m);
            for (int r = 0; r < n; ++r) {
                for (int t = 0; t < m; ++t) z(t) = sd(t) * normal(rng);
                ++c[isotonic_levels(z, w) - 1];
            }
        });
    return from_counts(counts, replicates, m - 1, WeightSource::LevelProb);
}

ChiBarWeights weights_monte_carlo(const PolyhedralCone& cone, int replicates, std::uint64_t seed,
                                  int jobs) {
    if (replicates < 10000) throw DomainError(kModule, "Monte Carlo weights need >= 10^4 replicates");
    const int d = cone.dim();
    const auto counts = chunked_counts(
        replicates, seed, jobs, d + 1, [&](std::mt19937_64& rng, int n, std::vector<long long>& c) {
            std::normal_distribution<double> normal;
            Eigen::VectorXd z(d);
            for (int r = 0; r < n; ++r) {
                for (int t = 0; t < d; ++t) z(t) = normal(rng);
                ++c[project_cone_detailed(z, cone).face_dimension];
            }
        });
    return from_counts(counts, replicates, d, WeightSource::MonteCarlo);
}

ManifoldGeometry::ManifoldGeometry(const PolyhedralCone& cone) {
    const Eigen::MatrixXd& g = cone.generators();
    if (g.cols() != cone.dim() || linalg::rank(g) != cone.dim())
        throw DimensionError(kModule, "tube geometry needs a simplicial cone (d independent generators)");
    generators_ = g;
    for (Eigen::Index j = 0; j < generators_.cols(); ++j) generators_.col(j).normalize();
}

ManifoldGeometry::Point ManifoldGeometry::evaluate(const std::vector<int>& face,
                                                   const Eigen::VectorXd& c,
                                                   bool with_second) const {
    const int k = static_cast<int>(face.size()) - 1;
    if (k < 0 || c.size() != k) throw DimensionError(kModule, "patch parameter has wrong size");
    const Eigen::Index dim = generators_.rows();
    std::vector<Eigen::VectorXd> gen(k + 1), y(k + 1);
    for (int j = 0; j <= k; ++j) gen[j] = generators_.col(face[j]);
    y[k] = gen[k];
    for (int j = k - 1; j >= 0; --j) y[j] = (1.0 - c(j)) * gen[j] + c(j) * y[j + 1];

    std::vector<Eigen::VectorXd> dy(k);
    double prefix = 1.0;
    for (int j = 0; j < k; ++j) {
        dy[j] = prefix * (y[j + 1] - gen[j]);
        prefix *= c(j);
    }
    const double s = y[0].norm();
    Point p;
    p.t = y[0] / s;
    p.s.resize(dim, k);
    Eigen::VectorXd a(k);
    for (int j = 0; j < k; ++j) {
        a(j) = p.t.dot(dy[j]);
        p.s.col(j) = (dy[j] - p.t * a(j)) / s;
    }
    if (!with_second) return p;

    auto ddy = [&](int j, int l) -> Eigen::VectorXd {
        if (j == l) return Eigen::VectorXd::Zero(dim);
        const int lo = std::min(j, l), hi = std::max(j, l);
        double f = 1.0;
        for (int i = 0; i < hi; ++i)
            if (i != lo) f *= c(i);
        return f * (y[hi + 1] - gen[hi]);
    };
    p.second.assign(k, Eigen::MatrixXd(dim, k));
    for (int j = 0; j < k; ++j)
        for (int l = 0; l < k; ++l) {
            const Eigen::VectorXd yjl = ddy(j, l);
            const Eigen::VectorXd tl = p.s.col(l);
            p.second[j].col(l) = yjl / s - dy[j] * a(l) / (s * s) - tl * a(j) / s -
                                 p.t * (tl.dot(dy[j]) + p.t.dot(yjl)) / s +
                                 p.t * a(j) * a(l) / (s * s);
        }
    return p;
}

Eigen::VectorXd ManifoldGeometry::parametrization(const Eigen::VectorXd& c) const {
    return evaluate(faces(0).front(), c).t;
}

Eigen::MatrixXd ManifoldGeometry::jacobian(const Eigen::VectorXd& c) const {
    return evaluate(faces(0).front(), c).s;
}

Eigen::VectorXd ManifoldGeometry::inward_normal(const std::vector<int>& face, int omitted,
                                                const Point& point) const {
    if (static_cast<Eigen::Index>(face.size()) != point.s.cols() + 1)
        throw DimensionError(kModule, "point does not belong to this face");
    Eigen::MatrixXd span(point.t.size(), point.s.cols() + 1);
    span << point.t, point.s;
    return normal_from_span(span, generators_.col(omitted));
}

std::vector<std::vector<int>> ManifoldGeometry::faces(int codim) const {
    const int d = this->d();
    const int size = d - codim;
    std::vector<std::vector<int>> out;
    if (size < 1 || codim < 0) return out;
    std::vector<int> cur(size);
    for (int i = 0; i < size; ++i) cur[i] = i;
    while (true) {
        out.push_back(cur);
        int pos = size - 1;
        while (pos >= 0 && cur[pos] == d - size + pos) --pos;
        if (pos < 0) break;
        ++cur[pos];
        for (int i = pos + 1; i < size; ++i) cur[i] = cur[i - 1] + 1;
    }
    return out;
}

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    if (n < 1) throw DomainError(kModule, "quadrature needs at least one node");
    nodes.assign(n, 0.5);
    weights.assign(n, 1.0);
    if (n == 1) return;
    // Legendre P_n and its derivative at x by the three-term recurrence.
    auto legendre = [n](double x, double& dp) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = pk;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        return p1;
    };
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            const double dx = legendre(x, dp) / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        legendre(x, dp);
        const double w = 1.0 / ((1.0 - x * x) * dp * dp);  // half of the [-1, 1] weight
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = weights[n - 1 - i] = w;
    }
}

GeometricConstants geometric_constants(const ManifoldGeometry& geom,
                                       const QuadratureConfig& quadrature) {
    if (geom.d() > 4)
        throw DimensionError(kModule, "tube constants are only available for d <= 4");
    if (quadrature.nodes < 2 || quadrature.coarse_nodes < 2 || !(quadrature.rel_tol > 0.0))
        throw ConfigError(kModule, "invalid quadrature configuration");
    const GeometricConstants fine = constants_at(geom, quadrature.nodes);
    const GeometricConstants coarse = constants_at(geom, quadrature.coarse_nodes);
    const std::pair<const char*, double GeometricConstants::*> fields[] = {
        {"kappa0", &GeometricConstants::kappa0},     {"kappa2", &GeometricConstants::kappa2},
        {"ell0", &GeometricConstants::ell0},         {"ell1", &GeometricConstants::ell1},
        {"ell2", &GeometricConstants::ell2},         {"upsilon0", &GeometricConstants::upsilon0},
        {"upsilon1", &GeometricConstants::upsilon1}, {"tau", &GeometricConstants::tau}};
    for (const auto& [name, member] : fields) {
        const double a = fine.*member, b = coarse.*member;
        if (!std::isfinite(a) || std::abs(a - b) > quadrature.rel_tol * std::max(1.0, std::abs(a)))
            throw QuadratureError(kModule, std::string("quadrature for ") + name +
                                               " did not converge (" + std::to_string(b) +
                                               " vs " + std::to_string(a) + ")");
    }
    return fine;
}

ChiBarWeights weights_tube(const GeometricConstants& k, int d) {
    if (d < 1 || d > 4) throw DimensionError(kModule, "tube weights need 1 <= d <= 4");
    auto omega = [](int j) { return sphere_volume(j); };
    ChiBarWeights out;
    out.d = d;
    out.source = WeightSource::Tube;
    out.weights = Eigen::VectorXd::Zero(d + 1);
    const double terms[4] = {
        k.kappa0 / omega(d - 1),
        d >= 2 ? k.ell0 / (2.0 * omega(d - 2)) : 0.0,
        d >= 3 ? (k.kappa2 + k.ell1 + k.upsilon0) / (2.0 * kPi * omega(d - 3)) : 0.0,
        d >= 4 ? (k.ell2 + k.upsilon1 + k.tau) / (4.0 * kPi * omega(d - 4)) : 0.0};
    double used = 0.0;
    for (int j = 0; j < 4 && d - j >= 1; ++j) {
        if (terms[j] < -1e-9)
            throw NonConvexManifoldError(kModule, "negative tube coefficient for chi^2_" +
                                                      std::to_string(d - j) +
                                                      ": critical radius below pi/2");
        out.weights(d - j) = std::max(0.0, terms[j]);
        used += out.weights(d - j);
    }
    const double rest = 1.0 - used;
    if (rest < -1e-9)
        throw NonConvexManifoldError(kModule, "tube coefficients exceed total mass");
    out.weights(0) = std::max(0.0, rest);
    out.constants = k;
    out.critical_radius_convex = true;
    return out;
}

double chibar_tail(const Eigen::VectorXd& w, double c) {
    if (!(c >= 0.0)) throw DomainError(kModule, "chi-bar tail needs c >= 0");
    if (w.size() < 1) throw WeightError(kModule, "empty weight vector");
    if (std::abs(w.sum() - 1.0) > 1e-6 || w.minCoeff() < -1e-12)
        throw WeightError(kModule, "weights must be nonnegative and sum to one");
    double tail = c == 0.0 ? w(0) : 0.0;
    for (Eigen::Index k = 1; k < w.size(); ++k)
        if (w(k) != 0.0) tail += w(k) * (c == 0.0 ? 1.0 : boost::math::gamma_q(0.5 * k, 0.5 * c));
    return tail;
}

double chibar_tail(const ChiBarWeights& weights, double c) { return chibar_tail(weights.weights, c); }

double chibar_quantile(const Eigen::VectorXd& w, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError(kModule, "alpha must lie in (0, 1)");
    chibar_tail(w, 0.0);  // validates
    if (alpha >= 1.0 - w(0)) return 0.0;
    double lo = 0.0, hi = 1.0;
    while (chibar_tail(w, hi) > alpha) {
        lo = hi;
        hi *= 2.0;
    }
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        (chibar_tail(w, mid) > alpha ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double chibar_quantile(const ChiBarWeights& weights, double alpha) {
    return chibar_quantile(weights.weights, alpha);
}

}  // namespace coneinfer
