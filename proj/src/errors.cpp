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

#include "coneinfer/errors.hpp"

namespace coneinfer {

const char* error_kind_name(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Config: return "ConfigError";
        case ErrorKind::Io: return "IoError";
        case ErrorKind::Parse: return "ParseError";
        case ErrorKind::Balance: return "BalanceError";
        case ErrorKind::Duplicate: return "DuplicateError";
        case ErrorKind::Dimension: return "DimensionError";
        case ErrorKind::Covariance: return "CovarianceError";
        case ErrorKind::Variance: return "VarianceError";
        case ErrorKind::Matrix: return "MatrixError";
        case ErrorKind::Domain: return "DomainError";
        case ErrorKind::Weight: return "WeightError";
        case ErrorKind::Convergence: return "ConvergenceError";
        case ErrorKind::Constraint: return "ConstraintError";
        case ErrorKind::Projection: return "ProjectionError";
        case ErrorKind::Quadrature: return "QuadratureError";
        case ErrorKind::NonConvexManifold: return "NonConvexManifoldError";
        case ErrorKind::Internal: return "InternalError";
    }
    return "InternalError";
}

}  // namespace coneinfer
