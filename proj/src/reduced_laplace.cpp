#include "oed/reduced_laplace.hpp"

#include <cmath>
#include <stdexcept>

namespace oed {

AdamWarmstart parse_warmstart(const std::string& spec) {
    const auto c1 = spec.find(':');
    const auto c2 = spec.find(':', c1 == std::string::npos ? c1 : c1 + 1);
    require(c1 != std::string::npos && c2 != std::string::npos && spec.substr(0, c1) == "adam",
            "warm start must look like adam:ITERS:LR, got '" + spec + "'");
    AdamWarmstart w;
    try {
        const std::string its = spec.substr(c1 + 1, c2 - c1 - 1), lr = spec.substr(c2 + 1);
        std::size_t n1 = 0, n2 = 0;
        w.iterations = std::stoi(its, &n1);
        w.lr = std::stod(lr, &n2);
        if (n1 != its.size() || n2 != lr.size()) throw std::invalid_argument(spec);
    } catch (const std::exception&) {
        throw DomainError("warm start must look like adam:ITERS:LR, got '" + spec + "'");
    }
    require(w.iterations >= 0 && w.lr > 0.0, "warm start: iterations must be >= 0 and lr > 0");
    return w;
}

void ReducedMapProblem::validate() const {
    require(surrogate != nullptr && noise != nullptr, "reduced MAP: missing surrogate or noise model");
    require(noise->candidates() == surrogate->observation_dim(), "reduced MAP: noise covariance has wrong size");
    design.validate(surrogate->observation_dim());
    require(y.size() == design.size(), "reduced MAP: data length does not match the design");
}

namespace {

// Whitened, design-restricted pieces: residual = c - P Phi(beta).
struct Context {
    Matrix p;  // L_n^{-1} xi^T Psi_F
    Vector c;  // L_n^{-1} (y - xi^T F_center)
    const Matrix* gram;
    const ReducedMap* map;

    explicit Context(const ReducedMapProblem& pr) {
        pr.validate();
        const DesignNoise dn(*pr.noise, pr.design);
        const ReducedBasis& out = pr.surrogate->output_basis();
        p = dn.whiten(restrict_rows(out.columns, pr.design));
        c = dn.whiten(Vector(pr.y - restrict(out.center, pr.design)));
        gram = &pr.surrogate->input_gram();
        map = &pr.surrogate->reduced_map();
    }

    double operator()(const Vector& beta, Vector* grad, Matrix* jac_out = nullptr) const {
        Vector phi;
        Matrix jac;
        if (grad || jac_out)
            map->evaluate(beta, phi, jac);
        else
            phi = map->forward(beta);
        const Vector r = c - p * phi;
        const Vector gb = *gram * beta;
        if (grad) *grad = -(jac.transpose() * (p.transpose() * r)) + gb;
        if (jac_out) *jac_out = std::move(jac);
        return 0.5 * r.squaredNorm() + 0.5 * beta.dot(gb);
    }
};

}  // namespace

double reduced_objective(const ReducedMapProblem& problem, const Vector& beta, Vector* grad) {
    const Context ctx(problem);
    require(beta.size() == ctx.map->input_dim(), "reduced objective: coefficient dimension mismatch");
    return ctx(beta, grad);
}

ReducedLaplaceResult map_reduced(const ReducedMapProblem& problem) {
    const Context ctx(problem);
    const Objective f = [&](const Vector& b, Vector& g) { return ctx(b, &g); };
    Vector beta0 = Vector::Zero(ctx.map->input_dim());
    ReducedLaplaceResult res;
    if (problem.warmstart) {
        Vector g0;
        ctx(beta0, &g0);
        res.initial_grad_norm = g0.norm();
        beta0 = adam_minimize(f, beta0, problem.warmstart->iterations, problem.warmstart->lr).x;
    }
    const MinimizeResult mr = lbfgs_minimize(f, beta0, problem.lbfgs);
    if (!problem.warmstart) res.initial_grad_norm = mr.initial_grad_norm;
    res.beta_map = mr.x;
    res.m_map = problem.surrogate->lift(res.beta_map);
    res.objective = mr.value;
    res.grad_norm = mr.grad_norm;
    res.iterations = mr.iterations;
    res.converged = mr.converged;
    res.message = mr.message;
    return res;
}

void eig_reduced(const ReducedMapProblem& problem, ReducedLaplaceResult& result) {
    const Context ctx(problem);
    require(result.beta_map.size() == ctx.map->input_dim(), "eig_reduced: MAP coefficients have wrong dimension");
    const Matrix jac = ctx.map->jacobian(result.beta_map);
    result.whitened_reduced_jacobian = ctx.p * jac;
    const Matrix& g = result.whitened_reduced_jacobian;
    const Matrix h = g.transpose() * g;
    const Matrix& gram = *ctx.gram;
    const Index r = h.rows();
    const bool orthonormal = (gram - Matrix::Identity(r, r)).cwiseAbs().maxCoeff() <= 1e-8;
    if (orthonormal) {
        EigenPairs ep = symmetric_eigen_desc(0.5 * (h + h.transpose()));
        result.eigvals = ep.values.cwiseMax(0.0);
        result.eigvecs = std::move(ep.vectors);
    } else {
        const Eigen::LLT<Matrix> llt(gram);
        if (llt.info() != Eigen::Success) throw NumericalError("eig_reduced: input Gram matrix not SPD");
        const Matrix l = llt.matrixL();
        Matrix t = l.triangularView<Eigen::Lower>().solve(h);
        t = l.triangularView<Eigen::Lower>().solve(Matrix(t.transpose()));
        EigenPairs ep = symmetric_eigen_desc(0.5 * (t + t.transpose()));
        result.eigvals = ep.values.cwiseMax(0.0);
        result.eigvecs = l.transpose().triangularView<Eigen::Upper>().solve(ep.vectors);
    }
    result.lifted_eigvecs = problem.surrogate->input_basis().columns * result.eigvecs;
}

MapErrors map_error_metrics(const PriorModel& prior, const Vector& hifi_map, const Vector& reduced_map) {
    require(hifi_map.size() == prior.dim() && reduced_map.size() == prior.dim(), "map errors: dimension mismatch");
    const Vector ref = hifi_map - prior.mean();
    const Vector diff = hifi_map - reduced_map;
    const double ref_m = ref.dot(prior.mass() * ref);
    const double ref_p = prior.norm_sq(ref);
    require(ref_m > 0.0 && ref_p > 0.0, "map errors: reference MAP coincides with the prior mean");
    MapErrors e;
    e.l2 = std::sqrt(std::max(0.0, diff.dot(prior.mass() * diff)) / ref_m);
    e.prior_inv = std::sqrt(std::max(0.0, prior.norm_sq(diff)) / ref_p);
    return e;
}

}  // namespace oed
