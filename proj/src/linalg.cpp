#include "oed/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace oed {

void require(bool cond, const std::string& what) {
    if (!cond) throw DomainError(what);
}

void normalize_column_signs(Matrix& columns) {
    for (Index j = 0; j < columns.cols(); ++j) {
        Index imax = 0;
        columns.col(j).cwiseAbs().maxCoeff(&imax);
        if (columns(imax, j) < 0) columns.col(j) *= -1.0;
    }
}

void normalize_column_signs(Matrix& columns, Matrix& companion) {
    for (Index j = 0; j < columns.cols(); ++j) {
        Index imax = 0;
        columns.col(j).cwiseAbs().maxCoeff(&imax);
        if (columns(imax, j) < 0) {
            columns.col(j) *= -1.0;
            companion.col(j) *= -1.0;
        }
    }
}

EigenPairs symmetric_eigen_desc(const Matrix& sym) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
    EigenPairs out;
    out.values = es.eigenvalues().reverse();
    out.vectors = es.eigenvectors().rowwise().reverse();
    normalize_column_signs(out.vectors);
    return out;
}

EigenPairs randomized_eigen(const LinearOperator& op, Index dim, Index rank,
                            const RandomizedOptions& opts) {
    require(rank >= 0 && rank <= dim, "randomized_eigen: rank out of range");
    const Index k = std::min(dim, rank + opts.oversampling);
    Matrix omega(dim, k);
    for (Index j = 0; j < k; ++j)
        omega.col(j) = standard_normal(dim, stream_key(opts.seed, Stream::sketch, j));

    Matrix y = op(omega);
    for (int p = 0; p < opts.power_iterations; ++p) {
        Eigen::HouseholderQR<Matrix> qr(y);
        Matrix q = qr.householderQ() * Matrix::Identity(dim, k);
        y = op(q);
    }
    Eigen::HouseholderQR<Matrix> qr(y);
    Matrix q = qr.householderQ() * Matrix::Identity(dim, k);
    // Second pass: Rayleigh-Ritz on the captured range.
    Matrix t = q.transpose() * op(q);
    t = 0.5 * (t + t.transpose());
    EigenPairs small = symmetric_eigen_desc(t);
    EigenPairs out;
    out.values = small.values.head(rank);
    out.vectors = q * small.vectors.leftCols(rank);
    normalize_column_signs(out.vectors);
    return out;
}

double relative_error(const Matrix& a, const Matrix& b) {
    const double denom = std::max(b.norm(), 1e-300);
    return (a - b).norm() / denom;
}

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace

std::uint64_t stream_key(std::uint64_t seed, Stream stream, std::uint64_t index) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
    return splitmix64(h ^ index);
}

Vector standard_normal(Index n, std::uint64_t key) {
    std::mt19937_64 engine(key);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal(engine);
    return v;
}

}  // namespace oed
