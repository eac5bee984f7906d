#include "oed/reduce.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

namespace oed {

namespace {

constexpr Index kDenseLimit = 5000;
constexpr Index kGramTile = 64;

Index count_numerical_rank(const Vector& values) {
    if (values.size() == 0) return 0;
    const double top = std::max(values.cwiseAbs().maxCoeff(), 1e-300);
    Index r = 0;
    for (Index i = 0; i < values.size(); ++i)
        if (values[i] > 1e-12 * top) ++r;
    return r;
}

void check_blocks(const std::vector<Matrix>& blocks) {
    require(!blocks.empty(), "gram: at least one sample is required");
    for (const auto& b : blocks) require(b.cols() == blocks.front().cols(), "gram: samples disagree in width");
}

ReducedBasis input_basis(BasisKind kind, const PriorModel& prior, Matrix whitened_vectors, Vector values) {
    ReducedBasis basis;
    basis.kind = kind;
    basis.metric = Metric::PriorInverse;
    basis.columns = prior.sqrt_apply(whitened_vectors);
    normalize_column_signs(basis.columns);
    basis.encoder = prior.precision_apply(basis.columns);
    basis.values = std::move(values);
    basis.center = prior.mean();
    basis.numerical_rank = count_numerical_rank(basis.values);
    return basis;
}

}  // namespace

std::string to_string(BasisKind kind) {
    switch (kind) {
        case BasisKind::DIS: return "dis";
        case BasisKind::KLE: return "kle";
        case BasisKind::DOS: return "dos";
        case BasisKind::PCA: return "pca";
    }
    return "?";
}

BasisKind parse_basis_kind(const std::string& name) {
    if (name == "dis") return BasisKind::DIS;
    if (name == "kle") return BasisKind::KLE;
    if (name == "dos") return BasisKind::DOS;
    if (name == "pca") return BasisKind::PCA;
    throw DomainError("unknown basis kind '" + name + "' (expected dis|kle|dos|pca)");
}

ReducedBasis ReducedBasis::truncated(Index r) const {
    require(r >= 0 && r <= rank(), "basis: truncation rank exceeds basis size");
    ReducedBasis out = *this;
    out.columns = columns.leftCols(r);
    out.encoder = encoder.leftCols(r);
    out.values = values.head(r);
    out.numerical_rank = std::min(numerical_rank, r);
    return out;
}

Matrix whitened_jacobian(const PriorModel& prior, const Matrix& jacobian) {
    require(jacobian.cols() == prior.dim(), "whitened_jacobian: Jacobian has wrong column count");
    return prior.sqrt_transpose_apply(Matrix(jacobian.transpose())).transpose();
}

Matrix gram_serial(const std::vector<Matrix>& blocks) {
    check_blocks(blocks);
    const Index d = blocks.front().cols();
    Matrix g = Matrix::Zero(d, d);
    for (const auto& x : blocks) g.noalias() += x.transpose() * x;
    return g / static_cast<double>(blocks.size());
}

Matrix gram_parallel(const std::vector<Matrix>& blocks, int workers) {
    check_blocks(blocks);
    const Index d = blocks.front().cols();
    Matrix g = Matrix::Zero(d, d);
    const Index tiles = (d + kGramTile - 1) / kGramTile;
    const int threads = workers > 0 ? workers : omp_get_max_threads();
    // Every entry accumulates over samples in the same order regardless of how
    // tiles are assigned to threads.
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (Index t = 0; t < tiles; ++t) {
        const Index c0 = t * kGramTile;
        const Index w = std::min(kGramTile, d - c0);
        Matrix tile = Matrix::Zero(d, w);
        for (const auto& x : blocks) tile.noalias() += x.transpose() * x.middleCols(c0, w);
        g.middleCols(c0, w) = tile;
    }
    return g / static_cast<double>(blocks.size());
}

ReducedBasis compute_dis(const PriorModel& prior, const std::vector<Matrix>& jacobians, Index r, int workers) {
    std::vector<Matrix> whitened;
    whitened.reserve(jacobians.size());
    for (const auto& j : jacobians) whitened.push_back(whitened_jacobian(prior, j));
    return compute_dis_whitened(prior, whitened, r, workers);
}

ReducedBasis compute_dis_whitened(const PriorModel& prior, const std::vector<Matrix>& whitened, Index r,
                                  int workers) {
    check_blocks(whitened);
    const Index d = prior.dim();
    require(whitened.front().cols() == d, "compute_dis: whitened Jacobians have wrong width");
    require(r >= 0, "compute_dis: rank must be nonnegative");
    r = std::min(r, d);
    EigenPairs ep;
    if (d <= kDenseLimit) {
        ep = symmetric_eigen_desc(gram_parallel(whitened, workers));
        ep.values = ep.values.head(r).eval();
        ep.vectors = ep.vectors.leftCols(r).eval();
    } else {
        const double inv_n = 1.0 / static_cast<double>(whitened.size());
        LinearOperator op = [&](const Matrix& v) {
            Matrix out = Matrix::Zero(d, v.cols());
            for (const auto& x : whitened) out.noalias() += x.transpose() * (x * v);
            return Matrix(out * inv_n);
        };
        ep = randomized_eigen(op, d, r);
    }
    ep.values = ep.values.cwiseMax(0.0);
    return input_basis(BasisKind::DIS, prior, std::move(ep.vectors), std::move(ep.values));
}

ReducedBasis compute_kle(const PriorModel& prior, Index r) {
    const Index d = prior.dim();
    require(r >= 0, "compute_kle: rank must be nonnegative");
    r = std::min(r, d);
    ReducedBasis basis;
    basis.kind = BasisKind::KLE;
    basis.metric = Metric::PriorInverse;
    basis.center = prior.mean();
    Matrix psi;  // M-orthonormal eigenvectors of Gamma M
    Vector lambda;
    if (d <= kDenseLimit) {
        // A psi = nu M psi with psi^T M psi = 1 gives Gamma M psi = psi / nu^2.
        Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(Matrix(prior.stiffness()), Matrix(prior.mass()));
        if (ges.info() != Eigen::Success) throw NumericalError("compute_kle: eigensolver failed");
        psi = ges.eigenvectors().leftCols(r);
        lambda = ges.eigenvalues().head(r).cwiseInverse().array().square();
    } else {
        throw DomainError("compute_kle: dense eigensolver limited to " + std::to_string(kDenseLimit) + " nodes");
    }
    basis.values = lambda;
    basis.columns = psi * lambda.cwiseSqrt().asDiagonal();
    normalize_column_signs(basis.columns);
    basis.encoder = prior.precision_apply(basis.columns);
    basis.numerical_rank = count_numerical_rank(basis.values);
    return basis;
}

ReducedBasis compute_pca(const Matrix& observables, Index r) {
    require(observables.rows() >= 1, "compute_pca: empty observable bank");
    const Index ds = observables.cols();
    ReducedBasis basis;
    basis.kind = BasisKind::PCA;
    basis.metric = Metric::Euclidean;
    basis.center = observables.colwise().mean().transpose();
    const Matrix centered = (observables.rowwise() - basis.center.transpose()).transpose();  // d_s x N
    r = std::min({r, ds, observables.rows()});
    Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinU);
    basis.columns = svd.matrixU().leftCols(r);
    basis.values = svd.singularValues().head(r);
    normalize_column_signs(basis.columns);
    basis.encoder = basis.columns;
    basis.numerical_rank = count_numerical_rank(basis.values);
    return basis;
}

ReducedBasis compute_dos(const PriorModel& prior, const std::vector<Matrix>& jacobians, Index r) {
    require(!jacobians.empty(), "compute_dos: at least one Jacobian sample is required");
    const Index ds = jacobians.front().rows();
    Matrix g = Matrix::Zero(ds, ds);
    for (const auto& j : jacobians) {
        const Matrix x = whitened_jacobian(prior, j);
        g.noalias() += x * x.transpose();
    }
    g /= static_cast<double>(jacobians.size());
    r = std::min(r, ds);
    EigenPairs ep = symmetric_eigen_desc(0.5 * (g + g.transpose()));
    ReducedBasis basis;
    basis.kind = BasisKind::DOS;
    basis.metric = Metric::Euclidean;
    basis.columns = ep.vectors.leftCols(r);
    basis.encoder = basis.columns;
    basis.values = ep.values.head(r).cwiseMax(0.0);
    basis.center = Vector::Zero(ds);
    basis.numerical_rank = count_numerical_rank(basis.values);
    return basis;
}

Vector encode_input(const ReducedBasis& basis, const Vector& m) {
    require(basis.metric == Metric::PriorInverse, "encode_input: basis is not an input basis");
    require(m.size() == basis.dim(), "encode_input: dimension mismatch");
    return basis.encoder.transpose() * (m - basis.center);
}

Vector decode_input(const ReducedBasis& basis, const Vector& beta) {
    require(basis.metric == Metric::PriorInverse, "decode_input: basis is not an input basis");
    require(beta.size() == basis.rank(), "decode_input: coefficient dimension mismatch");
    return basis.center + basis.columns * beta;
}

Vector encode_output(const ReducedBasis& basis, const Vector& f) {
    require(basis.metric == Metric::Euclidean, "encode_output: basis is not an output basis");
    require(f.size() == basis.dim(), "encode_output: dimension mismatch");
    return basis.columns.transpose() * (f - basis.center);
}

Vector decode_output(const ReducedBasis& basis, const Vector& beta) {
    require(basis.metric == Metric::Euclidean, "decode_output: basis is not an output basis");
    require(beta.size() == basis.rank(), "decode_output: coefficient dimension mismatch");
    return basis.center + basis.columns * beta;
}

ProjectionReport input_projection_errors(const ObservationMap& model, const PriorModel& prior,
                                         const ReducedBasis& basis, const std::vector<Vector>& parameters) {
    require(!parameters.empty(), "projection errors: empty sample set");
    require(basis.metric == Metric::PriorInverse, "projection errors: expected an input basis");
    require(basis.dim() == prior.dim(), "projection errors: basis does not match the prior");
    ProjectionReport rep;
    for (const auto& m : parameters) {
        const auto lin = model.linearize(m);
        const Vector f = lin->observables();
        const Vector fp = model.evaluate(decode_input(basis, encode_input(basis, m)));
        const Matrix j = jacobian_full(*lin);
        const Matrix jp = (j * basis.columns) * basis.encoder.transpose();
        rep.observable_error += (f - fp).norm() / std::max(f.norm(), 1e-300);
        rep.jacobian_error += (j - jp).norm() / std::max(j.norm(), 1e-300);
        ++rep.samples;
    }
    rep.observable_error /= static_cast<double>(rep.samples);
    rep.jacobian_error /= static_cast<double>(rep.samples);
    return rep;
}

ProjectionReport output_projection_errors(const ObservationMap& model, const ReducedBasis& basis,
                                          const std::vector<Vector>& parameters) {
    require(!parameters.empty(), "projection errors: empty sample set");
    require(basis.metric == Metric::Euclidean, "projection errors: expected an output basis");
    ProjectionReport rep;
    for (const auto& m : parameters) {
        const auto lin = model.linearize(m);
        const Vector f = lin->observables();
        const Vector fr = decode_output(basis, encode_output(basis, f));
        const Matrix j = jacobian_full(*lin);
        const Matrix jr = basis.columns * (basis.columns.transpose() * j);
        rep.observable_error += (f - fr).norm() / std::max(f.norm(), 1e-300);
        rep.jacobian_error += (j - jr).norm() / std::max(j.norm(), 1e-300);
        ++rep.samples;
    }
    rep.observable_error /= static_cast<double>(rep.samples);
    rep.jacobian_error /= static_cast<double>(rep.samples);
    return rep;
}

double map_projection_error(const PriorModel& prior, const ReducedBasis& basis, const std::vector<Vector>& points) {
    require(!points.empty(), "projection errors: empty sample set");
    double total = 0.0;
    for (const auto& x : points) {
        const Vector dx = x - prior.mean();
        const Vector px = basis.columns * (basis.encoder.transpose() * dx);
        total += std::sqrt(std::max(0.0, prior.norm_sq(dx - px))) / std::max(std::sqrt(prior.norm_sq(dx)), 1e-300);
    }
    return total / static_cast<double>(points.size());
}

}  // namespace oed
