#pragma once

// Dense reference computations shared by the unit tests. They rebuild the
// finite element matrices from node coordinates and use dense factorizations,
// so they do not go through the sparse code paths under test.

#include "oed/linalg.hpp"
#include "oed/mesh.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace oed::test {

inline Matrix dense_mass(const Mesh2D& mesh) {
    const Index n = mesh.node_count();
    Matrix m = Matrix::Zero(n, n);
    for (Index e = 0; e < mesh.element_count(); ++e) {
        const auto& el = mesh.element(e);
        const auto &a = mesh.node(el[0]), &b = mesh.node(el[1]), &c = mesh.node(el[2]);
        const double area = 0.5 * std::abs((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m(el[i], el[j]) += area / 12.0 * (i == j ? 2.0 : 1.0);
    }
    return m;
}

inline Matrix dense_laplacian(const Mesh2D& mesh) {
    const Index n = mesh.node_count();
    Matrix k = Matrix::Zero(n, n);
    for (Index e = 0; e < mesh.element_count(); ++e) {
        const auto& el = mesh.element(e);
        Eigen::Matrix3d t;
        for (int i = 0; i < 3; ++i) t.row(i) << 1.0, mesh.node(el[i])[0], mesh.node(el[i])[1];
        const double area = 0.5 * std::abs(t.determinant());
        // Columns of inv(t) hold the coefficients of the barycentric functions.
        const Eigen::Matrix3d c = t.inverse();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                k(el[i], el[j]) += area * (c(1, i) * c(1, j) + c(2, i) * c(2, j));
    }
    return k;
}

inline Matrix dense_prior_operator(const Mesh2D& mesh, double gamma, double kappa) {
    return gamma * dense_laplacian(mesh) + kappa * dense_mass(mesh);
}

// Gamma = A^{-1} M A^{-1}.
inline Matrix dense_prior_covariance(const Mesh2D& mesh, double gamma, double kappa) {
    const Matrix a = dense_prior_operator(mesh, gamma, kappa);
    const Matrix m = dense_mass(mesh);
    const Eigen::PartialPivLU<Matrix> lu(a);
    const Matrix ainv = lu.inverse();
    return ainv * m * ainv;
}

// Gamma^{-1} = A M^{-1} A.
inline Matrix dense_prior_precision(const Mesh2D& mesh, double gamma, double kappa) {
    const Matrix a = dense_prior_operator(mesh, gamma, kappa);
    return a * dense_mass(mesh).llt().solve(a);
}

// Descending eigenvalues of a symmetric matrix.
inline Vector sym_eigs_desc(const Matrix& s) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s + s.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().reverse();
}

inline double rel_err(const Matrix& a, const Matrix& b) {
    const double d = b.norm();
    return d == 0.0 ? a.norm() : (a - b).norm() / d;
}

inline Matrix random_orthonormal(Index rows, Index cols, std::uint64_t key) {
    Matrix g(rows, cols);
    for (Index j = 0; j < cols; ++j) g.col(j) = standard_normal(rows, key + static_cast<std::uint64_t>(j) * 7919);
    Eigen::HouseholderQR<Matrix> qr(g);
    return qr.householderQ() * Matrix::Identity(rows, cols);
}

}  // namespace oed::test
