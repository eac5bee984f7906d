#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace oed {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Invalid input: bad hyperparameters, dimension mismatch, bad index, bad config.
class DomainError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// An iterative solver gave up. Carries the last residual (or gradient) norm.
class NonConvergence : public std::runtime_error {
  public:
    NonConvergence(const std::string& what, double last_residual)
        : std::runtime_error(what), last_residual_(last_residual) {}
    double last_residual() const noexcept { return last_residual_; }

  private:
    double last_residual_;
};

/// Numerically invalid state (failed factorization, NaN, negative eigenvalue).
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& what);

/// Eigenpairs sorted by nonincreasing eigenvalue.
struct EigenPairs {
    Vector values;
    Matrix vectors;
};

/// Dense symmetric eigendecomposition, sorted descending, sign-normalized.
EigenPairs symmetric_eigen_desc(const Matrix& sym);

/// Flip each column so its entry of largest magnitude is positive.
void normalize_column_signs(Matrix& columns);
/// Same flips applied to a companion matrix (e.g. the whitened form of a basis).
void normalize_column_signs(Matrix& columns, Matrix& companion);

using LinearOperator = std::function<Matrix(const Matrix&)>;

struct RandomizedOptions {
    Index oversampling = 10;
    int power_iterations = 1;
    std::uint64_t seed = 0;
};

/// Randomized double-pass eigensolver for a symmetric positive semidefinite
/// operator given only through block products. Returns the leading `rank` pairs.
EigenPairs randomized_eigen(const LinearOperator& op, Index dim, Index rank,
                            const RandomizedOptions& opts = {});

/// Relative error ||a - b|| / max(||b||, tiny).
double relative_error(const Matrix& a, const Matrix& b);

/// Counter-based random streams: every (seed, stream, index) triple maps to an
/// independent, reproducible engine, so parallel draws do not depend on order.
enum class Stream : std::uint64_t {
    prior_sample = 1,
    noise = 2,
    training = 3,
    init = 4,
    shuffle = 5,
    sketch = 6,
    test_data = 7,
    oracle = 8,
};

std::uint64_t stream_key(std::uint64_t seed, Stream stream, std::uint64_t index);
Vector standard_normal(Index n, std::uint64_t key);

}  // namespace oed
