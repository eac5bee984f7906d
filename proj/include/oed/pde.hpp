#pragma once

#include "oed/forward.hpp"

#include <functional>
#include <memory>

namespace oed {

enum class ProblemKind { LinearDiffusion, SemilinearReaction };

std::string to_string(ProblemKind kind);
ProblemKind parse_problem_kind(const std::string& name);

struct NewtonOptions {
    double tol = 1e-10;
    int max_iter = 25;
    int max_halvings = 20;
};

/// Forward PDE models on the unit square, observed at a SensorGrid.
///
/// LinearDiffusion:    -div(e^m grad u) = 0, u = 1 on top, u = 0 on bottom, no flux on the sides.
/// SemilinearReaction: -nu lap(u) + e^m u^3 = f, u = 0 on the boundary.
///
/// The diffusion coefficient is averaged per element from the vertex values of
/// e^m. The reaction term uses the lumped mass matrix, so it stays nodal.
class ForwardModel : public ObservationMap {
  public:
    using SourceFn = std::function<double(double, double)>;

    static std::shared_ptr<const ForwardModel> linear_diffusion(std::shared_ptr<const Mesh2D> mesh,
                                                                SensorGrid sensors);
    /// Default source is max(0.5, exp(-25 |x - (0.7, 0.7)|^2)), nu = 0.01.
    static std::shared_ptr<const ForwardModel> semilinear_reaction(std::shared_ptr<const Mesh2D> mesh,
                                                                   SensorGrid sensors, double nu = 0.01,
                                                                   SourceFn source = {});

    ProblemKind kind() const noexcept { return kind_; }
    const Mesh2D& mesh() const noexcept { return *mesh_; }
    const SensorGrid& sensors() const noexcept { return sensors_; }
    double nu() const noexcept { return nu_; }
    const Vector& source() const noexcept { return source_; }
    NewtonOptions& newton() noexcept { return newton_; }
    const NewtonOptions& newton() const noexcept { return newton_; }

    Index parameter_dim() const override { return mesh_->node_count(); }
    Index observation_dim() const override { return sensors_.count(); }
    std::unique_ptr<Linearization> linearize(const Vector& m) const override;

    /// Residual of the discrete equations at the free nodes for a full nodal u.
    Vector residual(const Vector& u, const Vector& m) const;

  private:
    friend class StateSolution;
    ForwardModel() = default;
    void setup();

    ProblemKind kind_ = ProblemKind::LinearDiffusion;
    std::shared_ptr<const Mesh2D> mesh_;
    SensorGrid sensors_;
    double nu_ = 0.01;
    NewtonOptions newton_;

    std::vector<Index> free_of_node_;  // -1 on Dirichlet nodes
    std::vector<Index> node_of_free_;
    Vector dirichlet_values_;           // full nodal vector, zero on free nodes
    std::vector<Eigen::Matrix3d> element_stiffness_;
    SparseMatrix laplacian_ff_;
    Vector lumped_mass_;
    Vector source_;                     // nodal f
    Vector load_f_;                     // (M f) at free nodes
    SparseMatrix obs_free_;             // B restricted to free columns
};

/// Solved state u(m) with the factorization of dR/du kept for Jacobian solves.
class StateSolution : public Linearization {
  public:
    StateSolution(const ForwardModel& model, const Vector& m);

    const Vector& state() const noexcept { return u_; }
    const Vector& observables() const override { return obs_; }
    Index parameter_dim() const override { return model_->parameter_dim(); }
    Matrix apply(const Matrix& directions) const override;
    Matrix apply_transpose(const Matrix& weights) const override;

    /// Residual norms per Newton iteration (a single entry for the linear model).
    const std::vector<double>& residual_history() const noexcept { return history_; }
    double residual_norm() const noexcept { return history_.empty() ? 0.0 : history_.back(); }

  private:
    void build_coupling(const Vector& m);

    const ForwardModel* model_;
    Vector u_;
    Vector obs_;
    std::vector<double> history_;
    Eigen::SimplicialLDLT<SparseMatrix> fact_;  // dR/du at u, symmetric positive definite
    SparseMatrix coupling_;                     // dR/dm, n_free x d_m
};

/// Solve for the state at m. Throws NonConvergence if Newton fails.
std::unique_ptr<StateSolution> solve_state(const ForwardModel& model, const Vector& m);

/// F = B u.
Vector observe(const StateSolution& state, const SensorGrid& sensors);

}  // namespace oed
