#include "oed/prior.hpp"

namespace oed {

struct PriorModel::Factors {
    // Natural ordering keeps L_M = L without a permutation.
    Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>> chol_mass;
    Eigen::SimplicialLDLT<SparseMatrix> fact_stiffness;
    SparseMatrix lower;  // L_M
};

WhitenedSample draw_whitened(Index dim, std::uint64_t seed, std::uint64_t index) {
    return {standard_normal(dim, stream_key(seed, Stream::prior_sample, index)), seed};
}

PriorModel PriorModel::build(int cells_per_side, double gamma, double kappa, std::optional<Vector> mean) {
    require(cells_per_side >= 2, "prior: mesh needs at least 2 cells per side");
    require(gamma > 0.0, "prior: gamma must be positive");
    require(kappa > 0.0, "prior: kappa must be positive");
    PriorModel p;
    p.mesh_ = std::make_shared<const Mesh2D>(cells_per_side);
    p.gamma_ = gamma;
    p.kappa_ = kappa;
    p.mass_ = assemble_mass(*p.mesh_);
    p.stiffness_ = gamma * assemble_laplacian(*p.mesh_) + kappa * p.mass_;
    p.mass_.makeCompressed();
    p.stiffness_.makeCompressed();
    const Index d = p.mesh_->node_count();
    if (mean) {
        require(mean->size() == d, "prior: mean has wrong dimension");
        p.mean_ = *mean;
    } else {
        p.mean_ = Vector::Zero(d);
    }
    auto f = std::make_shared<Factors>();
    f->chol_mass.compute(p.mass_);
    if (f->chol_mass.info() != Eigen::Success) throw NumericalError("prior: mass matrix not SPD");
    f->fact_stiffness.compute(p.stiffness_);
    if (f->fact_stiffness.info() != Eigen::Success) throw NumericalError("prior: stiffness matrix not SPD");
    f->lower = f->chol_mass.matrixL();
    p.factors_ = std::move(f);
    return p;
}

Vector PriorModel::sample(const Vector& eta) const { return mean_ + sqrt_apply(eta); }

Vector PriorModel::sample(std::uint64_t seed, std::uint64_t index) const {
    return sample(draw_whitened(dim(), seed, index).eta);
}

Vector PriorModel::sqrt_apply(const Vector& eta) const {
    require(eta.size() == dim(), "prior: dimension mismatch");
    return factors_->fact_stiffness.solve(factors_->lower * eta);
}

Matrix PriorModel::sqrt_apply(const Matrix& etas) const {
    require(etas.rows() == dim(), "prior: dimension mismatch");
    Matrix tmp = factors_->lower * etas;
    return factors_->fact_stiffness.solve(tmp);
}

Vector PriorModel::sqrt_transpose_apply(const Vector& x) const {
    require(x.size() == dim(), "prior: dimension mismatch");
    return factors_->lower.transpose() * factors_->fact_stiffness.solve(x);
}

Matrix PriorModel::sqrt_transpose_apply(const Matrix& xs) const {
    require(xs.rows() == dim(), "prior: dimension mismatch");
    Matrix tmp = factors_->fact_stiffness.solve(xs);
    return factors_->lower.transpose() * tmp;
}

Vector PriorModel::sqrt_inverse_apply(const Vector& dm) const {
    require(dm.size() == dim(), "prior: dimension mismatch");
    Vector ad = stiffness_ * dm;
    return factors_->lower.triangularView<Eigen::Lower>().solve(ad);
}

Vector PriorModel::precision_apply(const Vector& u) const {
    require(u.size() == dim(), "prior: dimension mismatch");
    Vector au = stiffness_ * u;
    return stiffness_ * factors_->chol_mass.solve(au);
}

Matrix PriorModel::precision_apply(const Matrix& us) const {
    require(us.rows() == dim(), "prior: dimension mismatch");
    Matrix au = stiffness_ * us;
    Matrix t = factors_->chol_mass.solve(au);
    return stiffness_ * t;
}

Vector PriorModel::covariance_apply(const Vector& v) const {
    require(v.size() == dim(), "prior: dimension mismatch");
    Vector t = factors_->fact_stiffness.solve(v);
    Vector mt = mass_ * t;
    return factors_->fact_stiffness.solve(mt);
}

Vector PriorModel::mass_solve(const Vector& b) const { return factors_->chol_mass.solve(b); }

Vector PriorModel::stiffness_solve(const Vector& b) const { return factors_->fact_stiffness.solve(b); }

double PriorModel::inner(const Vector& u, const Vector& v) const {
    require(u.size() == dim() && v.size() == dim(), "prior_inner: dimension mismatch");
    Vector au = stiffness_ * u;
    Vector av = stiffness_ * v;
    return au.dot(factors_->chol_mass.solve(av));
}

}  // namespace oed
