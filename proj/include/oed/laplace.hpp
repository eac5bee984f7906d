#pragma once

#include "oed/forward.hpp"
#include "oed/prior.hpp"

#include <memory>

namespace oed {

/// Data y observed through design xi: y = xi^T F(m) + eps, eps ~ N(0, Gamma_noise restricted to xi).
/// Holds non-owning references; the referenced objects must outlive it.
struct InverseProblem {
    const ObservationMap* model = nullptr;
    const PriorModel* prior = nullptr;
    const NoiseModel* noise = nullptr;
    Design design;
    Vector y;

    void validate() const;
};

struct NewtonCgOptions {
    double grad_tol = 1e-8;  // relative to max(1, ||g(m0)||)
    int max_newton = 50;
    int max_cg = 500;
    double armijo_c = 1e-4;
    int max_backtrack = 30;
};

/// MAP point with the quantities needed for the Laplace approximation.
struct LaplaceResult {
    Vector m_map;
    Vector eta_map;             // whitened coordinates, m = m_prior + S eta
    double objective = 0.0;
    double grad_norm = 0.0;     // gradient norm in whitened coordinates (the Gamma-norm)
    double initial_grad_norm = 0.0;
    int newton_iterations = 0;
    double avg_cg_iterations = 0.0;
    std::size_t linearized_solves = 0;
    Matrix whitened_jacobian;   // X = L_n^{-1} J_xi S at m_map, r_s x d_m

    Vector eigvals;             // nonincreasing, >= 0
    Matrix eigvecs;             // W = S V, Gamma^{-1}-orthonormal
    Matrix whitened_eigvecs;    // V, Euclidean-orthonormal
};

/// Misfit-plus-prior objective 1/2 ||y - F_xi(m)||^2_{Gamma_n^{-1}} + 1/2 ||m - m_prior||^2_{Gamma^{-1}}.
double map_objective(const InverseProblem& problem, const Vector& m);

/// Inexact Newton-CG on the Gauss-Newton Hessian, run in whitened coordinates so
/// that CG is preconditioned by the prior covariance. Throws NonConvergence when
/// max_newton is exceeded.
LaplaceResult map_hifi(const InverseProblem& problem, const NewtonCgOptions& opts = {},
                       const Vector* m0 = nullptr);

/// Generalized eigenpairs of H_misfit^GN w = lambda Gamma^{-1} w from the thin SVD
/// of X = L_n^{-1} J_xi S: lambda = sigma^2, w = S v. r is clamped to r_s.
void gen_eig_hifi(const PriorModel& prior, LaplaceResult& result, Index r);
/// Same, relinearizing the model at m_map.
LaplaceResult gen_eig_hifi(const InverseProblem& problem, const Vector& m_map, Index r);

/// (Gamma - W D W^T) v with D = diag(lambda / (1 + lambda)).
Vector posterior_cov_apply(const PriorModel& prior, const Vector& eigvals, const Matrix& eigvecs, const Vector& v);

/// X = L_n^{-1} J_xi S using r_s adjoint solves.
Matrix whitened_design_jacobian(const Linearization& lin, const PriorModel& prior, const DesignNoise& noise,
                                const Design& design);

}  // namespace oed
