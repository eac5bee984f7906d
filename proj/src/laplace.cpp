#include "oed/laplace.hpp"

#include <algorithm>
#include <cmath>

namespace oed {

void InverseProblem::validate() const {
    require(model != nullptr && prior != nullptr && noise != nullptr, "inverse problem: missing component");
    require(model->parameter_dim() == prior->dim(), "inverse problem: model and prior dimensions disagree");
    require(noise->candidates() == model->observation_dim(), "inverse problem: noise covariance has wrong size");
    design.validate(model->observation_dim());
    require(y.size() == design.size(), "inverse problem: data length does not match the design");
}

double map_objective(const InverseProblem& problem, const Vector& m) {
    problem.validate();
    const DesignNoise dn(*problem.noise, problem.design);
    const Vector r = dn.whiten(Vector(problem.y - restrict(problem.model->evaluate(m), problem.design)));
    return 0.5 * r.squaredNorm() + 0.5 * problem.prior->norm_sq(m - problem.prior->mean());
}

Matrix whitened_design_jacobian(const Linearization& lin, const PriorModel& prior, const DesignNoise& noise,
                                const Design& design) {
    const Index rs = design.size();
    if (rs == 0) return Matrix::Zero(0, prior.dim());
    const Matrix lt = noise.whiten_transpose(Matrix(Matrix::Identity(rs, rs)));
    const Matrix jt = lin.apply_transpose(scatter_rows(lt, design, lin.observation_dim()));
    return prior.sqrt_transpose_apply(jt).transpose();
}

namespace {

struct Iterate {
    Vector eta;
    Vector m;
    std::unique_ptr<Linearization> lin;
    Vector r;  // whitened residual L_n^{-1} (y - F_xi(m))
    double objective = 0.0;
};

// CG on (I + X^T X) p = b. Returns the iteration count.
int conjugate_gradient(const Matrix& x, const Vector& b, double tol, int max_iter, Vector& p) {
    p = Vector::Zero(b.size());
    Vector r = b;
    Vector d = r;
    double rr = r.squaredNorm();
    const double stop = tol * tol * rr;
    int it = 0;
    while (it < max_iter && rr > stop && rr > 0.0) {
        const Vector ad = d + x.transpose() * (x * d);
        const double curv = d.dot(ad);
        if (curv <= 0.0) break;
        const double a = rr / curv;
        p += a * d;
        r -= a * ad;
        const double rr_new = r.squaredNorm();
        d = r + (rr_new / rr) * d;
        rr = rr_new;
        ++it;
    }
    return it;
}

}  // namespace

LaplaceResult map_hifi(const InverseProblem& problem, const NewtonCgOptions& opts, const Vector* m0) {
    problem.validate();
    const PriorModel& prior = *problem.prior;
    const DesignNoise dn(*problem.noise, problem.design);
    std::size_t solves = 0;

    auto evaluate = [&](Vector eta) {
        Iterate it;
        it.eta = std::move(eta);
        it.m = prior.sample(it.eta);
        it.lin = problem.model->linearize(it.m);
        it.r = dn.whiten(Vector(problem.y - restrict(it.lin->observables(), problem.design)));
        it.objective = 0.5 * it.r.squaredNorm() + 0.5 * it.eta.squaredNorm();
        return it;
    };

    Vector eta0 = Vector::Zero(prior.dim());
    if (m0 != nullptr) eta0 = prior.sqrt_inverse_apply(*m0 - prior.mean());
    Iterate cur = evaluate(std::move(eta0));

    LaplaceResult res;
    long cg_total = 0;
    double target = 0.0;
    Matrix x;
    while (true) {
        x = whitened_design_jacobian(*cur.lin, prior, dn, problem.design);
        const Vector g = cur.eta - x.transpose() * cur.r;
        const double gn = g.norm();
        if (res.newton_iterations == 0) {
            res.initial_grad_norm = gn;
            target = opts.grad_tol * std::max(1.0, gn);
        }
        res.grad_norm = gn;
        if (gn <= target) break;
        if (res.newton_iterations >= opts.max_newton) {
            solves += cur.lin->linearized_solves();
            throw NonConvergence("map_hifi: Newton-CG did not converge in " + std::to_string(opts.max_newton) +
                                     " iterations",
                                 gn);
        }
        const double forcing = std::min(0.5, std::sqrt(gn / std::max(res.initial_grad_norm, 1e-300)));
        Vector p;
        cg_total += conjugate_gradient(x, -g, forcing, opts.max_cg, p);
        const double slope = g.dot(p);
        double alpha = 1.0;
        int back = 0;
        bool stalled = false;
        Iterate trial = evaluate(cur.eta + p);
        while (!(std::isfinite(trial.objective) && trial.objective <= cur.objective + opts.armijo_c * alpha * slope)) {
            solves += trial.lin->linearized_solves();
            if (++back > opts.max_backtrack) {
                // The remaining decrease is below roundoff: keep the current point.
                if (std::abs(slope) <= 1e-14 * std::max(1.0, std::abs(cur.objective))) {
                    stalled = true;
                    break;
                }
                throw NonConvergence("map_hifi: Armijo backtracking failed", gn);
            }
            alpha *= 0.5;
            trial = evaluate(cur.eta + alpha * p);
        }
        if (stalled) break;
        solves += cur.lin->linearized_solves();
        cur = std::move(trial);
        ++res.newton_iterations;
    }
    solves += cur.lin->linearized_solves();
    res.m_map = cur.m;
    res.eta_map = cur.eta;
    res.objective = cur.objective;
    res.avg_cg_iterations =
        res.newton_iterations > 0 ? static_cast<double>(cg_total) / res.newton_iterations : 0.0;
    res.linearized_solves = solves;
    res.whitened_jacobian = std::move(x);
    return res;
}

void gen_eig_hifi(const PriorModel& prior, LaplaceResult& result, Index r) {
    const Matrix& x = result.whitened_jacobian;
    require(x.cols() == prior.dim(), "gen_eig_hifi: whitened Jacobian has wrong width");
    require(r >= 0, "gen_eig_hifi: rank must be nonnegative");
    r = std::min({r, x.rows(), x.cols()});
    if (r == 0) {
        result.eigvals = Vector::Zero(0);
        result.eigvecs = Matrix::Zero(prior.dim(), 0);
        result.whitened_eigvecs = Matrix::Zero(prior.dim(), 0);
        return;
    }
    Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinV);
    result.eigvals = svd.singularValues().head(r).array().square();
    result.whitened_eigvecs = svd.matrixV().leftCols(r);
    result.eigvecs = prior.sqrt_apply(result.whitened_eigvecs);
    normalize_column_signs(result.eigvecs, result.whitened_eigvecs);
}

LaplaceResult gen_eig_hifi(const InverseProblem& problem, const Vector& m_map, Index r) {
    problem.validate();
    const DesignNoise dn(*problem.noise, problem.design);
    const auto lin = problem.model->linearize(m_map);
    LaplaceResult res;
    res.m_map = m_map;
    res.eta_map = problem.prior->sqrt_inverse_apply(m_map - problem.prior->mean());
    res.whitened_jacobian = whitened_design_jacobian(*lin, *problem.prior, dn, problem.design);
    res.linearized_solves = lin->linearized_solves();
    gen_eig_hifi(*problem.prior, res, r);
    return res;
}

Vector posterior_cov_apply(const PriorModel& prior, const Vector& eigvals, const Matrix& eigvecs, const Vector& v) {
    require(eigvecs.cols() == eigvals.size() && eigvecs.rows() == prior.dim(), "posterior_cov_apply: bad eigenpairs");
    require(v.size() == prior.dim(), "posterior_cov_apply: dimension mismatch");
    const Vector d = eigvals.array() / (1.0 + eigvals.array());
    return prior.covariance_apply(v) - eigvecs * (d.asDiagonal() * (eigvecs.transpose() * v));
}

}  // namespace oed
