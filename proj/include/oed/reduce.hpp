#pragma once

#include "oed/forward.hpp"
#include "oed/prior.hpp"

#include <vector>

namespace oed {

enum class BasisKind { DIS, KLE, DOS, PCA };
enum class Metric { PriorInverse, Euclidean };

std::string to_string(BasisKind kind);
BasisKind parse_basis_kind(const std::string& name);

/// Projection basis with its spectrum.
///
/// Input bases (DIS, KLE) are Gamma^{-1}-orthonormal and centered at m_prior.
/// Output bases (DOS, PCA) are Euclidean-orthonormal and centered at the
/// sample mean. `encoder` is the matrix E with beta = E^T (x - center), i.e.
/// Gamma^{-1} Psi for input bases and Psi itself for output bases.
struct ReducedBasis {
    BasisKind kind = BasisKind::PCA;
    Metric metric = Metric::Euclidean;
    Matrix columns;
    Matrix encoder;
    Vector values;
    Vector center;
    Index numerical_rank = 0;  // count of values above 1e-12 * max

    Index dim() const noexcept { return columns.rows(); }
    Index rank() const noexcept { return columns.cols(); }
    bool is_input() const noexcept { return metric == Metric::PriorInverse; }
    /// Leading r columns; bases are nested so this is the rank-r basis.
    ReducedBasis truncated(Index r) const;
};

/// Whitened Jacobian J S (rows d_s, cols d_m), S = A^{-1} L_M.
Matrix whitened_jacobian(const PriorModel& prior, const Matrix& jacobian);

/// (1/N) sum_n X_n^T X_n. The parallel version sums fixed-size chunks in a fixed
/// order, so the result does not depend on the number of threads.
Matrix gram_serial(const std::vector<Matrix>& blocks);
Matrix gram_parallel(const std::vector<Matrix>& blocks, int workers = 0);

/// Derivative-informed input subspace from full Jacobian samples.
ReducedBasis compute_dis(const PriorModel& prior, const std::vector<Matrix>& jacobians, Index r,
                         int workers = 0);
/// Same, from samples already whitened with whitened_jacobian.
ReducedBasis compute_dis_whitened(const PriorModel& prior, const std::vector<Matrix>& whitened, Index r,
                                  int workers = 0);
/// Karhunen-Loeve basis of Gamma, rescaled to be Gamma^{-1}-orthonormal.
/// values are the eigenvalues of the covariance operator in the M inner product.
ReducedBasis compute_kle(const PriorModel& prior, Index r);
/// Principal components of an observable bank (rows are samples).
ReducedBasis compute_pca(const Matrix& observables, Index r);
/// Derivative-informed output subspace: eig of (1/N) sum J Gamma J^T.
ReducedBasis compute_dos(const PriorModel& prior, const std::vector<Matrix>& jacobians, Index r);

Vector encode_input(const ReducedBasis& basis, const Vector& m);
Vector decode_input(const ReducedBasis& basis, const Vector& beta);
Vector encode_output(const ReducedBasis& basis, const Vector& f);
Vector decode_output(const ReducedBasis& basis, const Vector& beta);

/// Mean relative input-projection errors over a set of parameter samples:
/// observables F(P m) vs F(m), Jacobians J(m) P vs J(m), with P the
/// Gamma^{-1}-orthogonal projector onto span(Psi) shifted to m_prior.
struct ProjectionReport {
    double observable_error = 0.0;
    double jacobian_error = 0.0;
    Index samples = 0;
};
ProjectionReport input_projection_errors(const ObservationMap& model, const PriorModel& prior,
                                         const ReducedBasis& basis, const std::vector<Vector>& parameters);
/// Output-projection errors: F_r vs F and Psi_F Psi_F^T J vs J.
ProjectionReport output_projection_errors(const ObservationMap& model, const ReducedBasis& basis,
                                          const std::vector<Vector>& parameters);
/// Mean ||x - P x||_{Gamma^{-1}} / ||x||_{Gamma^{-1}} for vectors measured from m_prior.
double map_projection_error(const PriorModel& prior, const ReducedBasis& basis, const std::vector<Vector>& points);

}  // namespace oed
