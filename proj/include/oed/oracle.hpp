#pragma once

#include "oed/laplace.hpp"
#include "oed/reduced_laplace.hpp"

#include <iosfwd>
#include <memory>
#include <vector>

namespace oed {

/// F(m) = offset + G m. Each Jacobian column or row applied counts as one linearized solve.
class LinearMap : public ObservationMap {
  public:
    explicit LinearMap(Matrix g, Vector offset = Vector());

    const Matrix& matrix() const noexcept { return g_; }
    const Vector& offset() const noexcept { return offset_; }

    Index parameter_dim() const override { return g_.cols(); }
    Index observation_dim() const override { return g_.rows(); }
    Vector evaluate(const Vector& m) const override { return offset_ + g_ * m; }
    std::unique_ptr<Linearization> linearize(const Vector& m) const override;

  private:
    Matrix g_;
    Vector offset_;
};

/// Random linear map with smooth, decaying sensitivity to the parameter field:
/// row i is a Gaussian kernel around sensor i's location, scaled by `scale`.
std::shared_ptr<const LinearMap> random_linear_map(const PriorModel& prior, const SensorGrid& sensors,
                                                   std::uint64_t seed, double scale = 1.0);

constexpr Index kOracleMaxDim = 512;

/// Dense Gamma and Gamma^{-1}. Throws DomainError above kOracleMaxDim.
Matrix dense_covariance(const PriorModel& prior);
Matrix dense_precision(const PriorModel& prior);

/// Gaussian-linear inverse problem in dense form (design already applied).
struct LinearProblem {
    Matrix a;           // r_s x d_m, xi^T G
    Vector offset;      // r_s
    Matrix prior_cov;   // d_m x d_m
    Matrix prior_prec;  // d_m x d_m
    Vector prior_mean;
    Matrix noise_cov;   // r_s x r_s
};

LinearProblem make_linear_problem(const LinearMap& map, const PriorModel& prior, const NoiseModel& noise,
                                  const Design& design);
LinearProblem make_linear_problem(Matrix a, Vector offset, Matrix prior_cov, Vector prior_mean, Matrix noise_cov);

/// (A^T Gn^{-1} A + Gp^{-1})^{-1} (A^T Gn^{-1} (y - offset) + Gp^{-1} m_prior).
Vector oracle_map(const LinearProblem& lp, const Vector& y);
/// Generalized eigenvalues of A^T Gn^{-1} A w = lambda Gp^{-1} w, nonincreasing (length d_m).
Vector oracle_eigs(const LinearProblem& lp);

struct OracleCriteria {
    double a = 0.0;    // trace((H + Gp^{-1})^{-1} H)
    double d = 0.0;    // log det(I + Gp H)
    double eig = 0.0;  // d - a + ||m_map - m_prior||^2_{Gp^{-1}}
};
/// Closed forms from dense determinants and traces, no eigensolver.
OracleCriteria oracle_criteria(const LinearProblem& lp, const Vector& y);
/// Expectation of the eig criterion over y drawn from the joint: equals d.
double oracle_expected_eig(const LinearProblem& lp);

/// Per-draw comparison between the hifi and the surrogate Laplace approximations.
struct BudgetSample {
    double eps1 = 0.0;          // ||L_n^{-1} xi^T (F - F_NN)(m*)||
    double eps2 = 0.0;          // ||X - Y||_F: whitened design Jacobians at m*
    double eps3 = 0.0;          // ||(I - P_r) eta*||
    double eps_m = 0.0;         // ||m* - m_hat*||_{Gamma^{-1}}
    double eps_m_rel = 0.0;     // eps_m / ||m* - m_prior||_{Gamma^{-1}}
    double eps_lambda = 0.0;    // max_i |lambda_i - lambda_hat_i| (zero padded)
    double hessian_gap = 0.0;   // ||H - H_hat||_F, both whitened, at their own MAP points
    double a_gap = 0.0;         // |A - A_hat|
    double d_gap = 0.0;         // |D - D_hat|
    Index rank = 0;             // padded eigenvalue count r
    bool weyl_ok = false;       // eps_lambda <= hessian_gap
    bool criteria_ok = false;   // a_gap, d_gap <= r eps_lambda
};

struct ErrorBudget {
    // Sup over draws.
    double eps1 = 0.0, eps2 = 0.0, eps3 = 0.0, eps_m = 0.0, eps_lambda = 0.0;
    // Medians over draws.
    double median_eps_m = 0.0, median_eps_m_rel = 0.0, median_eps_lambda = 0.0;
    std::vector<BudgetSample> samples;
};

struct BudgetDraw {
    Design design;
    Vector y;
};

/// Hifi MAP and eigenpairs (rank r_s) for each draw; reusable across surrogates.
std::vector<LaplaceResult> hifi_reference(const ObservationMap& truth, const PriorModel& prior,
                                          const NoiseModel& noise, const std::vector<BudgetDraw>& draws,
                                          int workers = 0);

ErrorBudget measure_error_budget(const ObservationMap& truth, const PriorModel& prior, const NoiseModel& noise,
                                 const Surrogate& surrogate, const std::vector<BudgetDraw>& draws,
                                 const std::vector<LaplaceResult>& reference, const LbfgsOptions& lbfgs = {},
                                 int workers = 0);

struct BudgetRow {
    Index training_size = 0;
    std::uint64_t seed = 0;
    ErrorBudget budget;
};
/// CSV: training_size,seed,eps1,eps2,eps3,eps_m,eps_lambda (sup values).
void write_budget_csv(std::ostream& os, const std::vector<BudgetRow>& rows);

}  // namespace oed
