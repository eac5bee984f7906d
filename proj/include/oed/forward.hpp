#pragma once

#include "oed/linalg.hpp"
#include "oed/mesh.hpp"

#include <memory>
#include <string>
#include <vector>

namespace oed {

/// Candidate sensor locations and the P1 interpolation rows B (d_s x d_m).
class SensorGrid {
  public:
    SensorGrid() = default;
    SensorGrid(const Mesh2D& mesh, std::vector<std::array<double, 2>> points);

    /// Regular sub-grid in the strip y < 0.5: points ((i+1/2)/nx, (j+1/2)/10).
    static SensorGrid lower(const Mesh2D& mesh, Index count);
    /// Regular grid over the whole square: points ((i+1/2)/k, (j+1/2)/k).
    static SensorGrid full(const Mesh2D& mesh, Index count);

    Index count() const noexcept { return static_cast<Index>(points_.size()); }
    const std::vector<std::array<double, 2>>& points() const noexcept { return points_; }
    const SparseMatrix& interpolation() const noexcept { return rows_; }

  private:
    std::vector<std::array<double, 2>> points_;
    SparseMatrix rows_;
};

/// Ordered selection of candidate sensors; realizes the design matrix xi.
struct Design {
    std::vector<Index> selected;

    Index size() const noexcept { return static_cast<Index>(selected.size()); }
    /// Throws DomainError on out-of-range or repeated indices.
    void validate(Index candidates) const;
    static Design all(Index candidates);
};

Vector restrict(const Vector& values, const Design& design);
/// Rows of `rows` picked by the design (xi^T applied on the left).
Matrix restrict_rows(const Matrix& rows, const Design& design);
/// Inverse of restrict_rows: zero rows everywhere except the selected ones (xi applied).
Matrix scatter_rows(const Matrix& rows, const Design& design, Index candidates);

/// Observation-noise covariance over all candidates. Designs see the sub-block.
class NoiseModel {
  public:
    NoiseModel() = default;
    static NoiseModel isotropic(Index candidates, double sigma);
    static NoiseModel dense(Matrix covariance);

    Index candidates() const noexcept { return cov_.rows(); }
    const Matrix& covariance() const noexcept { return cov_; }
    /// One draw eps ~ N(0, Gamma_noise) over all candidates.
    Vector draw(std::uint64_t key) const;

  private:
    Matrix cov_;
    Matrix chol_;  // lower factor of cov_
};

/// Gamma_noise restricted to a design, with its Cholesky factor L_n.
class DesignNoise {
  public:
    DesignNoise(const NoiseModel& noise, const Design& design);

    Index size() const noexcept { return cov_.rows(); }
    const Matrix& covariance() const noexcept { return cov_; }
    /// L_n^{-1} x, so that ||L_n^{-1} r||^2 = r^T Gamma_noise^{-1} r.
    Matrix whiten(const Matrix& x) const;
    Vector whiten(const Vector& x) const;
    /// L_n^{-T} x.
    Matrix whiten_transpose(const Matrix& x) const;
    Vector whiten_transpose(const Vector& x) const;

  private:
    Matrix cov_;
    Eigen::LLT<Matrix> llt_;
};

/// The parameter-to-observable map linearized at one parameter value.
/// Holds the observables F(m) at all candidates and applies J = dF/dm.
class Linearization {
  public:
    virtual ~Linearization() = default;

    virtual const Vector& observables() const = 0;
    virtual Index parameter_dim() const = 0;
    Index observation_dim() const { return observables().size(); }

    /// J V, one tangent solve per column.
    virtual Matrix apply(const Matrix& directions) const = 0;
    /// J^T W, one adjoint solve per column.
    virtual Matrix apply_transpose(const Matrix& weights) const = 0;

    /// Linearized solves performed so far through this object.
    std::size_t linearized_solves() const noexcept { return solves_; }

  protected:
    mutable std::size_t solves_ = 0;
};

/// F : R^{d_m} -> R^{d_s}.
class ObservationMap {
  public:
    virtual ~ObservationMap() = default;
    virtual Index parameter_dim() const = 0;
    virtual Index observation_dim() const = 0;
    virtual std::unique_ptr<Linearization> linearize(const Vector& m) const = 0;
    virtual Vector evaluate(const Vector& m) const { return linearize(m)->observables(); }
};

/// Full Jacobian, one adjoint solve per row.
Matrix jacobian_full(const Linearization& lin);

/// Psi_F^T J Psi_m using min(r_F, r_m) linearized solves: an adjoint sweep over
/// the output basis when r_F <= r_m, otherwise a tangent sweep over the input basis.
Matrix reduced_jacobian(const Linearization& lin, const Matrix& psi_m, const Matrix& psi_f);

}  // namespace oed
