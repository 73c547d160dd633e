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

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace coneinfer {

// Numeric values are part of the C ABI (see cone_infer.h); do not renumber.
enum class ErrorKind : int {
    Config = 10,
    Io = 11,
    Parse = 20,
    Balance = 21,
    Duplicate = 22,
    Dimension = 30,
    Covariance = 31,
    Variance = 32,
    Matrix = 33,
    Domain = 34,
    Weight = 35,
    Convergence = 40,
    Constraint = 41,
    Projection = 42,
    Quadrature = 43,
    NonConvexManifold = 44,
    Internal = 99,
};

const char* error_kind_name(ErrorKind kind) noexcept;

// Base of every error raised by the library. `module` names the component
// that raised it so the harness can report provenance.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string module, const std::string& what)
        : std::runtime_error(what), kind_(kind), module_(std::move(module)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& module() const noexcept { return module_; }

private:
    ErrorKind kind_;
    std::string module_;
};

#define CONEINFER_DEFINE_ERROR(Name, Kind)                                      \
    class Name : public Error {                                                \
    public:                                                                    \
        Name(std::string module, const std::string& what)                      \
            : Error(ErrorKind::Kind, std::move(module), what) {}               \
    };

CONEINFER_DEFINE_ERROR(IoError, Io)
CONEINFER_DEFINE_ERROR(ParseError, Parse)
CONEINFER_DEFINE_ERROR(BalanceError, Balance)
CONEINFER_DEFINE_ERROR(DuplicateError, Duplicate)
CONEINFER_DEFINE_ERROR(DimensionError, Dimension)
CONEINFER_DEFINE_ERROR(CovarianceError, Covariance)
CONEINFER_DEFINE_ERROR(VarianceError, Variance)
CONEINFER_DEFINE_ERROR(MatrixError, Matrix)
CONEINFER_DEFINE_ERROR(DomainError, Domain)
CONEINFER_DEFINE_ERROR(WeightError, Weight)
CONEINFER_DEFINE_ERROR(ConstraintError, Constraint)
CONEINFER_DEFINE_ERROR(ProjectionError, Projection)
CONEINFER_DEFINE_ERROR(QuadratureError, Quadrature)
CONEINFER_DEFINE_ERROR(NonConvexManifoldError, NonConvexManifold)

#undef CONEINFER_DEFINE_ERROR

// Unknown or malformed configuration. Carries the offending keys.
class ConfigError : public Error {
public:
    ConfigError(std::string module, const std::string& what,
                std::vector<std::string> keys = {})
        : Error(ErrorKind::Config, std::move(module), what), keys_(std::move(keys)) {}

    const std::vector<std::string>& keys() const noexcept { return keys_; }

private:
    std::vector<std::string> keys_;
};

// Iteration cap hit. The best iterate found so far travels with the error.
class ConvergenceError : public Error {
public:
    ConvergenceError(std::string module, const std::string& what,
                     Eigen::VectorXd best, double best_value)
        : Error(ErrorKind::Convergence, std::move(module), what),
          best_(std::move(best)), best_value_(best_value) {}

    const Eigen::VectorXd& best_iterate() const noexcept { return best_; }
    double best_value() const noexcept { return best_value_; }

private:
    Eigen::VectorXd best_;
    double best_value_;
};

}  // namespace coneinfer
