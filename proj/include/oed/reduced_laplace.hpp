#pragma once

#include "oed/forward.hpp"
#include "oed/lbfgs.hpp"
#include "oed/prior.hpp"
#include "oed/surrogate.hpp"

#include <optional>

namespace oed {

/// Optional Adam iterations run before LBFGS.
struct AdamWarmstart {
    int iterations = 300;
    double lr = 0.01;
};

/// Parses "adam:ITERS:LR".
AdamWarmstart parse_warmstart(const std::string& spec);

struct ReducedMapProblem {
    const Surrogate* surrogate = nullptr;
    const NoiseModel* noise = nullptr;
    Design design;
    Vector y;
    LbfgsOptions lbfgs{};
    std::optional<AdamWarmstart> warmstart;

    void validate() const;
};

struct ReducedLaplaceResult {
    Vector beta_map;
    Vector m_map;              // m_prior + Psi_m beta_map
    double objective = 0.0;
    double grad_norm = 0.0;
    double initial_grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string message;

    Vector eigvals;            // nonincreasing, >= 0, length r_m
    Matrix eigvecs;            // u_i, r_m x r_m
    Matrix lifted_eigvecs;     // Psi_m u_i, Gamma^{-1}-orthonormal
    Matrix whitened_reduced_jacobian;  // G = L_n^{-1} xi^T Psi_F grad(Phi) at beta_map, r_s x r_m
};

/// 1/2 ||y - xi^T(F_center + Psi_F Phi(beta))||^2_{Gamma_n^{-1}} + 1/2 beta^T Gamma_m beta, with gradient.
double reduced_objective(const ReducedMapProblem& problem, const Vector& beta, Vector* grad);

/// LBFGS from beta = 0 (after the optional Adam warm start). Does not throw when
/// the iteration cap is hit; `converged` reports the outcome.
ReducedLaplaceResult map_reduced(const ReducedMapProblem& problem);

/// Eigenpairs of H_hat = grad(Phi)^T Psi_F^T xi Gamma_n^{-1} xi^T Psi_F grad(Phi) at beta
/// (generalized with Gamma_m when the input basis is not orthonormal in that metric).
void eig_reduced(const ReducedMapProblem& problem, ReducedLaplaceResult& result);

struct MapErrors {
    double l2 = 0.0;         // ||m - m_hat||_M / ||m||_M
    double prior_inv = 0.0;  // ||m - m_hat||_{Gamma^{-1}} / ||m||_{Gamma^{-1}}
};
/// Relative MAP errors, with both points measured from m_prior.
MapErrors map_error_metrics(const PriorModel& prior, const Vector& hifi_map, const Vector& reduced_map);

}  // namespace oed
