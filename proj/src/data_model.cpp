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

#include "coneinfer/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "coneinfer/errors.hpp"
#include "coneinfer/parallel.hpp"

namespace coneinfer {

namespace {

constexpr const char* kModule = "data_model";

double logistic(double eta) {
    if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

}  // namespace

LinkFunction LinkFunction::from_name(std::string_view name) {
    if (name == "identity") return LinkFunction(LinkKind::Identity);
    if (name == "log") return LinkFunction(LinkKind::Log);
    if (name == "logit") return LinkFunction(LinkKind::Logit);
    throw ConfigError(kModule, "unknown link '" + std::string(name) + "'", {std::string(name)});
}

std::string_view LinkFunction::name() const noexcept {
    switch (kind_) {
        case LinkKind::Identity: return "identity";
        case LinkKind::Log: return "log";
        case LinkKind::Logit: return "logit";
    }
    return "identity";
}

double LinkFunction::evaluate(double eta) const {
    switch (kind_) {
        case LinkKind::Identity: return eta;
        case LinkKind::Log: return std::exp(eta);
        case LinkKind::Logit: return logistic(eta);
    }
    return eta;
}

double LinkFunction::derivative(double eta) const {
    switch (kind_) {
        case LinkKind::Identity: return 1.0;
        case LinkKind::Log: return std::exp(eta);
        case LinkKind::Logit: {
            const double p = logistic(eta);
            return p * (1.0 - p);
        }
    }
    return 1.0;
}

double LinkFunction::second_derivative(double eta) const {
    switch (kind_) {
        case LinkKind::Identity: return 0.0;
        case LinkKind::Log: return std::exp(eta);
        case LinkKind::Logit: {
            const double p = logistic(eta);
            return p * (1.0 - p) * (1.0 - 2.0 * p);
        }
    }
    return 0.0;
}

double LinkFunction::variance(double mu) const {
    switch (kind_) {
        case LinkKind::Identity: return 1.0;
        case LinkKind::Log: return mu;
        case LinkKind::Logit: return mu * (1.0 - mu);
    }
    return 1.0;
}

double LinkFunction::variance_derivative(double mu) const {
    switch (kind_) {
        case LinkKind::Identity: return 0.0;
        case LinkKind::Log: return 1.0;
        case LinkKind::Logit: return 1.0 - 2.0 * mu;
    }
    return 0.0;
}

BasisKind basis_kind_from_name(std::string_view name) {
    if (name == "independence") return BasisKind::Independence;
    if (name == "exchangeable") return BasisKind::Exchangeable;
    if (name == "ar1") return BasisKind::Ar1;
    throw ConfigError(kModule, "unknown basis '" + std::string(name) + "'", {std::string(name)});
}

std::string_view basis_kind_name(BasisKind kind) noexcept {
    switch (kind) {
        case BasisKind::Independence: return "independence";
        case BasisKind::Exchangeable: return "exchangeable";
        case BasisKind::Ar1: return "ar1";
    }
    return "independence";
}

CorrelationBasis make_basis(BasisKind kind, int n) {
    if (n < 1) throw DimensionError(kModule, "basis needs n >= 1");
    if (kind != BasisKind::Independence && n < 2)
        throw DimensionError(kModule, "exchangeable and ar1 bases need n >= 2");

    CorrelationBasis basis;
    basis.kind = kind;
    basis.matrices.push_back(Eigen::MatrixXd::Identity(n, n));
    if (kind == BasisKind::Exchangeable) {
        basis.matrices.push_back(Eigen::MatrixXd::Ones(n, n) - Eigen::MatrixXd::Identity(n, n));
    } else if (kind == BasisKind::Ar1) {
        Eigen::MatrixXd band = Eigen::MatrixXd::Zero(n, n);
        for (int j = 0; j + 1 < n; ++j) band(j, j + 1) = band(j + 1, j) = 1.0;
        basis.matrices.push_back(std::move(band));
    }
    return basis;
}

LongitudinalDataset::LongitudinalDataset(Eigen::MatrixXd responses,
                                         std::vector<Eigen::MatrixXd> covariates,
                                         Eigen::MatrixXd times,
                                         std::vector<std::int64_t> subject_ids,
                                         std::optional<std::vector<int>> group_labels)
    : responses_(std::move(responses)),
      covariates_(std::move(covariates)),
      times_(std::move(times)),
      subject_ids_(std::move(subject_ids)),
      groups_(std::move(group_labels)) {
    const auto N = responses_.rows();
    const auto n = responses_.cols();
    if (N < 2) throw DimensionError(kModule, "dataset needs at least 2 subjects");
    if (n < 1) throw DimensionError(kModule, "dataset needs at least 1 time point");
    if (static_cast<Eigen::Index>(covariates_.size()) != N)
        throw DimensionError(kModule, "one covariate block per subject required");
    r_ = static_cast<int>(covariates_.front().cols());
    if (r_ < 1) throw DimensionError(kModule, "at least one covariate required");
    for (const auto& x : covariates_) {
        if (x.rows() != n || x.cols() != r_)
            throw DimensionError(kModule, "covariate blocks must all be n x r");
        if (!x.allFinite()) throw DomainError(kModule, "non-finite covariate value");
    }
    if (!responses_.allFinite()) throw DomainError(kModule, "non-finite response value");

    if (times_.size() == 0) {
        times_.resize(N, n);
        for (Eigen::Index i = 0; i < N; ++i)
            for (Eigen::Index j = 0; j < n; ++j) times_(i, j) = static_cast<double>(j + 1);
    } else if (times_.rows() != N || times_.cols() != n) {
        throw DimensionError(kModule, "times must be N x n");
    }
    if (subject_ids_.empty()) {
        subject_ids_.resize(N);
        for (Eigen::Index i = 0; i < N; ++i) subject_ids_[i] = i + 1;
    } else if (static_cast<Eigen::Index>(subject_ids_.size()) != N) {
        throw DimensionError(kModule, "one subject id per subject required");
    }
    if (groups_ && static_cast<Eigen::Index>(groups_->size()) != N)
        throw DimensionError(kModule, "one group label per subject required");
}

bool LongitudinalDataset::operator==(const LongitudinalDataset& other) const {
    if (responses_.rows() != other.responses_.rows() ||
        responses_.cols() != other.responses_.cols() || r_ != other.r_)
        return false;
    if (responses_ != other.responses_ || times_ != other.times_ ||
        subject_ids_ != other.subject_ids_ || groups_ != other.groups_)
        return false;
    for (std::size_t i = 0; i < covariates_.size(); ++i)
        if (covariates_[i] != other.covariates_[i]) return false;
    return true;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_row(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

double parse_real(std::string_view cell, std::size_t line_no, std::string_view column) {
    double value = 0.0;
    const auto* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
    if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
        std::ostringstream msg;
        msg << "line " << line_no << ": column '" << column << "' is not a finite number: '"
            << cell << "'";
        throw ParseError(kModule, msg.str());
    }
    return value;
}

std::int64_t parse_integer(std::string_view cell, std::size_t line_no, std::string_view column) {
    std::int64_t value = 0;
    const auto* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
    if (cell.empty() || ec != std::errc() || ptr != end) {
        std::ostringstream msg;
        msg << "line " << line_no << ": column '" << column << "' is not an integer: '" << cell
            << "'";
        throw ParseError(kModule, msg.str());
    }
    return value;
}

struct Observation {
    double time;
    double y;
    std::vector<double> x;
};

}  // namespace

LongitudinalDataset parse_dataset(std::string_view csv_text, const CsvSchema& schema) {
    std::size_t pos = 0;
    std::size_t line_no = 0;
    auto next_line = [&](std::string_view& line) {
        while (pos < csv_text.size()) {
            const auto nl = csv_text.find('\n', pos);
            line = csv_text.substr(pos, nl == std::string_view::npos ? csv_text.npos : nl - pos);
            pos = nl == std::string_view::npos ? csv_text.size() : nl + 1;
            ++line_no;
            if (!trim(line).empty()) return true;
        }
        return false;
    };

    std::string_view line;
    if (!next_line(line)) throw ParseError(kModule, "empty CSV: header row required");
    const auto header = split_row(line);
    auto column_of = [&](const std::string& name) -> int {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (header[c] == name) return static_cast<int>(c);
        throw ParseError(kModule, "missing column '" + name + "'");
    };
    const int subject_col = column_of(schema.subject);
    const int time_col = column_of(schema.time);
    const int y_col = column_of(schema.response);
    // Without an explicit schema a column named "group" (as written by
    // write_dataset) holds subject labels rather than a covariate.
    std::optional<std::string> group_name = schema.group;
    if (!group_name && schema.covariates.empty() &&
        std::find(header.begin(), header.end(), "group") != header.end())
        group_name = "group";
    const int group_col = group_name ? column_of(*group_name) : -1;

    std::vector<int> x_cols;
    std::vector<std::string> x_names;
    if (schema.covariates.empty()) {
        for (int c = y_col + 1; c < static_cast<int>(header.size()); ++c) {
            if (c == subject_col || c == time_col || c == group_col) continue;
            x_cols.push_back(c);
            x_names.emplace_back(header[c]);
        }
    } else {
        for (const auto& name : schema.covariates) {
            x_cols.push_back(column_of(name));
            x_names.push_back(name);
        }
    }
    if (x_cols.empty()) throw ParseError(kModule, "no covariate columns");

    std::vector<std::int64_t> order;
    std::unordered_map<std::int64_t, std::map<double, Observation>> rows;
    std::unordered_map<std::int64_t, int> group_of;
    while (next_line(line)) {
        const auto cells = split_row(line);
        if (cells.size() != header.size()) {
            std::ostringstream msg;
            msg << "line " << line_no << ": expected " << header.size() << " cells, found "
                << cells.size();
            throw ParseError(kModule, msg.str());
        }
        const auto subject = parse_integer(cells[subject_col], line_no, schema.subject);
        Observation obs;
        obs.time = parse_real(cells[time_col], line_no, schema.time);
        obs.y = parse_real(cells[y_col], line_no, schema.response);
        for (std::size_t k = 0; k < x_cols.size(); ++k)
            obs.x.push_back(parse_real(cells[x_cols[k]], line_no, x_names[k]));
        if (group_col >= 0) {
            const auto g = static_cast<int>(parse_integer(cells[group_col], line_no, *group_name));
            const auto [it, inserted] = group_of.emplace(subject, g);
            if (!inserted && it->second != g) {
                std::ostringstream msg;
                msg << "line " << line_no << ": subject " << subject << " changes group";
                throw ParseError(kModule, msg.str());
            }
        }

        auto [it, fresh] = rows.try_emplace(subject);
        if (fresh) order.push_back(subject);
        const double t = obs.time;
        if (!it->second.emplace(t, std::move(obs)).second) {
            std::ostringstream msg;
            msg << "line " << line_no << ": duplicate observation for subject " << subject
                << " at time " << t;
            throw DuplicateError(kModule, msg.str());
        }
    }
    if (order.empty()) throw ParseError(kModule, "CSV has no data rows");

    const auto n = rows.at(order.front()).size();
    for (const auto id : order) {
        if (rows.at(id).size() != n) {
            std::ostringstream msg;
            msg << "subject " << id << " has " << rows.at(id).size() << " observations; expected "
                << n << " (balanced design required)";
            throw BalanceError(kModule, msg.str());
        }
    }

    const auto N = static_cast<Eigen::Index>(order.size());
    const auto r = static_cast<Eigen::Index>(x_cols.size());
    Eigen::MatrixXd y(N, static_cast<Eigen::Index>(n));
    Eigen::MatrixXd times(N, static_cast<Eigen::Index>(n));
    std::vector<Eigen::MatrixXd> x(order.size(), Eigen::MatrixXd(static_cast<Eigen::Index>(n), r));
    std::optional<std::vector<int>> groups;
    if (group_col >= 0) groups.emplace();
    for (Eigen::Index i = 0; i < N; ++i) {
        Eigen::Index j = 0;
        for (const auto& [t, obs] : rows.at(order[i])) {
            times(i, j) = t;
            y(i, j) = obs.y;
            for (Eigen::Index k = 0; k < r; ++k) x[i](j, k) = obs.x[k];
            ++j;
        }
        if (groups) groups->push_back(group_of.at(order[i]));
    }
    return LongitudinalDataset(std::move(y), std::move(x), std::move(times), std::move(order),
                               std::move(groups));
}

LongitudinalDataset load_dataset(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(kModule, "cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str(), schema);
}

namespace {

void append_real(std::string& out, double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

}  // namespace

std::string format_dataset(const LongitudinalDataset& data) {
    std::string out = "subject,time,y";
    for (int k = 0; k < data.n_covariates(); ++k) out += ",x" + std::to_string(k + 1);
    if (data.group_labels()) out += ",group";
    out += '\n';
    for (int i = 0; i < data.n_subjects(); ++i) {
        for (int j = 0; j < data.n_times(); ++j) {
            out += std::to_string(data.subject_ids()[i]);
            out += ',';
            append_real(out, data.times()(i, j));
            out += ',';
            append_real(out, data.responses()(i, j));
            for (int k = 0; k < data.n_covariates(); ++k) {
                out += ',';
                append_real(out, data.covariates(i)(j, k));
            }
            if (data.group_labels()) {
                out += ',';
                out += std::to_string((*data.group_labels())[i]);
            }
            out += '\n';
        }
    }
    return out;
}

void write_dataset(const LongitudinalDataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(kModule, "cannot write '" + path + "'");
    out << format_dataset(data);
    if (!out) throw IoError(kModule, "write to '" + path + "' failed");
}

CorrelationKind correlation_kind_from_name(std::string_view name) {
    if (name == "independence") return CorrelationKind::Independence;
    if (name == "exchangeable") return CorrelationKind::Exchangeable;
    if (name == "ar1") return CorrelationKind::Ar1;
    throw ConfigError(kModule, "unknown correlation '" + std::string(name) + "'", {std::string(name)});
}

int CovariateDesign::dimension(int gamma_size) const {
    if (kind == Kind::Group) return groups * (1 + per_group);
    return gamma_size;
}

Eigen::MatrixXd correlation_matrix(CorrelationKind kind, double rho, int n) {
    if (!std::isfinite(rho)) throw CovarianceError(kModule, "correlation parameter must be finite");
    Eigen::MatrixXd R = Eigen::MatrixXd::Identity(n, n);
    switch (kind) {
        case CorrelationKind::Independence:
            break;
        case CorrelationKind::Exchangeable:
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b)
                    if (a != b) R(a, b) = rho;
            break;
        case CorrelationKind::Ar1:
            if (std::abs(rho) >= 1.0)
                throw CovarianceError(kModule, "AR-1 correlation needs |rho| < 1");
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) R(a, b) = std::pow(rho, std::abs(a - b));
            break;
    }
    return R;
}

LongitudinalDataset simulate_dataset(const GeneratorConfig& config, std::uint64_t seed) {
    const int N = config.n_subjects;
    const int n = config.n_times;
    const int r = static_cast<int>(config.gamma.size());
    if (N < 2 || n < 1) throw DimensionError(kModule, "simulation needs N >= 2 and n >= 1");
    if (!(config.noise_scale >= 0.0) || !std::isfinite(config.noise_scale))
        throw DomainError(kModule, "noise scale must be finite and nonnegative");
    const auto& design = config.design;
    if (design.kind == CovariateDesign::Kind::Group &&
        (design.groups < 1 || design.per_group < 0))
        throw DimensionError(kModule, "group design needs groups >= 1 and per_group >= 0");
    if (design.dimension(r) != r || r < 1) {
        std::ostringstream msg;
        msg << "gamma has " << r << " entries; covariate design needs " << design.dimension(r);
        throw DimensionError(kModule, msg.str());
    }

    const Eigen::MatrixXd R = correlation_matrix(config.correlation, config.rho, n);
    Eigen::LLT<Eigen::MatrixXd> chol(R);
    if (chol.info() != Eigen::Success || chol.matrixL().toDenseMatrix().diagonal().minCoeff() <= 0.0)
        throw CovarianceError(kModule, "requested working correlation is not positive definite");
    const Eigen::MatrixXd root = chol.matrixL();
    const LinkFunction link(config.link);

    Eigen::MatrixXd y(N, n);
    std::vector<Eigen::MatrixXd> x(N, Eigen::MatrixXd::Zero(n, r));
    std::optional<std::vector<int>> groups;
    if (design.kind == CovariateDesign::Kind::Group) groups.emplace(N);

    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < N; ++i) {
        auto gen = substream(seed, static_cast<std::uint64_t>(i));
        auto& xi = x[i];
        if (design.kind == CovariateDesign::Kind::Group) {
            const int m = design.groups;
            const int p = design.per_group;
            const int t = i % m;
            (*groups)[i] = t + 1;
            for (int j = 0; j < n; ++j) {
                xi(j, t) = 1.0;
                for (int k = 0; k < p; ++k) xi(j, m + t * p + k) = normal(gen);
            }
        } else {
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < r; ++k)
                    xi(j, k) = (k == 0 && design.intercept) ? 1.0 : normal(gen);
        }
        Eigen::VectorXd z(n);
        for (int j = 0; j < n; ++j) z(j) = normal(gen);
        const Eigen::VectorXd noise = config.noise_scale * (root * z);
        const Eigen::VectorXd eta = xi * config.gamma;
        for (int j = 0; j < n; ++j) y(i, j) = link.evaluate(eta(j)) + noise(j);
    }
    return LongitudinalDataset(std::move(y), std::move(x), {}, {}, std::move(groups));
}

}  // namespace coneinfer
