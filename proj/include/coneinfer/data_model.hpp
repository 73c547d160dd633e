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
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace coneinfer {

enum class LinkKind { Identity, Log, Logit };

// Inverse link h(.) together with the marginal variance function v(mu)
// used for the diagonal of A_i. Dispersion is fixed at 1.
class LinkFunction {
public:
    explicit LinkFunction(LinkKind kind = LinkKind::Identity) : kind_(kind) {}

    static LinkFunction from_name(std::string_view name);

    LinkKind kind() const noexcept { return kind_; }
    std::string_view name() const noexcept;

    double evaluate(double eta) const;
    double derivative(double eta) const;
    double second_derivative(double eta) const;
    double variance(double mu) const;
    double variance_derivative(double mu) const;

private:
    LinkKind kind_;
};

enum class BasisKind { Independence, Exchangeable, Ar1 };

BasisKind basis_kind_from_name(std::string_view name);
std::string_view basis_kind_name(BasisKind kind) noexcept;

// Symmetric 0/1 matrices M_1..M_s spanning the inverse working correlation.
// M_1 is always the identity.
struct CorrelationBasis {
    BasisKind kind = BasisKind::Independence;
    std::vector<Eigen::MatrixXd> matrices;

    int size() const noexcept { return static_cast<int>(matrices.size()); }
    int n_times() const noexcept {
        return matrices.empty() ? 0 : static_cast<int>(matrices.front().rows());
    }
};

CorrelationBasis make_basis(BasisKind kind, int n);

// Balanced longitudinal data: N subjects observed at the same n ordinal
// times, with an r-dimensional covariate per observation. Immutable.
class LongitudinalDataset {
public:
    // `covariates[i]` is the n x r design block X_i^T of subject i (row j is
    // X_ij^T). `times` defaults to 1..n for every subject and `subject_ids`
    // to 1..N.
    LongitudinalDataset(Eigen::MatrixXd responses,
                        std::vector<Eigen::MatrixXd> covariates,
                        Eigen::MatrixXd times = {},
                        std::vector<std::int64_t> subject_ids = {},
                        std::optional<std::vector<int>> group_labels = std::nullopt);

    int n_subjects() const noexcept { return static_cast<int>(responses_.rows()); }
    int n_times() const noexcept { return static_cast<int>(responses_.cols()); }
    int n_covariates() const noexcept { return r_; }

    const Eigen::MatrixXd& responses() const noexcept { return responses_; }
    const Eigen::MatrixXd& covariates(int subject) const { return covariates_.at(subject); }
    const Eigen::MatrixXd& times() const noexcept { return times_; }
    const std::vector<std::int64_t>& subject_ids() const noexcept { return subject_ids_; }
    const std::optional<std::vector<int>>& group_labels() const noexcept { return groups_; }

    bool operator==(const LongitudinalDataset& other) const;

private:
    Eigen::MatrixXd responses_;
    std::vector<Eigen::MatrixXd> covariates_;
    Eigen::MatrixXd times_;
    std::vector<std::int64_t> subject_ids_;
    std::optional<std::vector<int>> groups_;
    int r_ = 0;
};

// Column mapping for CSV ingestion. An empty `covariates` list means "every
// column after y, in file order".
struct CsvSchema {
    std::string subject = "subject";
    std::string time = "time";
    std::string response = "y";
    std::vector<std::string> covariates;
    std::optional<std::string> group;
};

LongitudinalDataset load_dataset(const std::string& path, const CsvSchema& schema = {});
LongitudinalDataset parse_dataset(std::string_view csv_text, const CsvSchema& schema = {});
void write_dataset(const LongitudinalDataset& data, const std::string& path);
std::string format_dataset(const LongitudinalDataset& data);

enum class CorrelationKind { Independence, Exchangeable, Ar1 };

CorrelationKind correlation_kind_from_name(std::string_view name);

// How covariates are generated.
//   Group:    m treatment groups assigned round-robin; gamma is laid out as
//             (mu_1..mu_m, beta_1 (p values), ..., beta_m (p values)), so
//             r = m * (1 + p). Non-mean covariates are iid N(0, 1).
//   Gaussian: r = gamma.size() iid N(0, 1) covariates, optionally with the
//             first column fixed at 1.
struct CovariateDesign {
    enum class Kind { Group, Gaussian };
    Kind kind = Kind::Group;
    int groups = 3;
    int per_group = 1;
    bool intercept = true;

    int dimension(int gamma_size) const;
};

struct GeneratorConfig {
    Eigen::VectorXd gamma;
    LinkKind link = LinkKind::Identity;
    CorrelationKind correlation = CorrelationKind::Exchangeable;
    double rho = 0.3;
    double noise_scale = 1.0;
    int n_subjects = 200;
    int n_times = 3;
    CovariateDesign design;
};

Eigen::MatrixXd correlation_matrix(CorrelationKind kind, double rho, int n);

// Y_i = h(X_i gamma) + noise_scale * R^{1/2} z_i with z_i iid N(0, I).
// Deterministic in (config, seed).
LongitudinalDataset simulate_dataset(const GeneratorConfig& config, std::uint64_t seed);

}  // namespace coneinfer
