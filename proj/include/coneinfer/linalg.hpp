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

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace coneinfer::linalg {

// Moore-Penrose inverse of a symmetric PSD matrix via eigendecomposition.
// Eigenvalues below rel_cutoff * (largest eigenvalue) are treated as zero.
inline Eigen::MatrixXd pinv_symmetric(const Eigen::MatrixXd& a, double rel_cutoff = 1e-10) {
    const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    const Eigen::VectorXd& values = eig.eigenvalues();
    const double largest = values.size() ? std::max(values.maxCoeff(), 0.0) : 0.0;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(values.size());
    if (largest > 0.0) {
        for (Eigen::Index k = 0; k < values.size(); ++k)
            if (values(k) > rel_cutoff * largest) inv(k) = 1.0 / values(k);
    }
    const Eigen::MatrixXd& vecs = eig.eigenvectors();
    return vecs * inv.asDiagonal() * vecs.transpose();
}

inline double default_rank_tol(const Eigen::JacobiSVD<Eigen::MatrixXd>& svd, Eigen::Index rows,
                               Eigen::Index cols) {
    const auto& s = svd.singularValues();
    const double top = s.size() ? s(0) : 0.0;
    return std::max<double>(rows, cols) * 1e-12 * std::max(top, 1e-300);
}

inline int rank(const Eigen::MatrixXd& a) {
    if (a.size() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const double tol = default_rank_tol(svd, a.rows(), a.cols());
    int k = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > tol) ++k;
    return k;
}

// Orthonormal basis of the column space of `a` (rows(a) x rank).
inline Eigen::MatrixXd column_basis(const Eigen::MatrixXd& a) {
    if (a.cols() == 0) return Eigen::MatrixXd(a.rows(), 0);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU);
    const double tol = default_rank_tol(svd, a.rows(), a.cols());
    int k = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > tol) ++k;
    return svd.matrixU().leftCols(k);
}

// Orthonormal basis of {x : a x = 0} (cols(a) x nullity).
inline Eigen::MatrixXd null_space(const Eigen::MatrixXd& a) {
    const auto n = a.cols();
    if (a.rows() == 0) return Eigen::MatrixXd::Identity(n, n);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const double tol = default_rank_tol(svd, a.rows(), a.cols());
    int k = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > tol) ++k;
    return svd.matrixV().rightCols(n - k);
}

// Orthogonal projector onto the column space of `a`.
inline Eigen::MatrixXd projector(const Eigen::MatrixXd& a) {
    const Eigen::MatrixXd q = column_basis(a);
    return q * q.transpose();
}

}  // namespace coneinfer::linalg
