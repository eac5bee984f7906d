#pragma once

#include "oed/linalg.hpp"
#include "oed/mesh.hpp"

#include <memory>
#include <optional>

namespace oed {

/// Standard-normal draw together with the key that reproduces it.
struct WhitenedSample {
    Vector eta;
    std::uint64_t seed = 0;
};

WhitenedSample draw_whitened(Index dim, std::uint64_t seed, std::uint64_t index = 0);

/// Discretized Matern prior N(m_prior, Gamma) with Gamma^{-1} = A M^{-1} A,
/// where M is the P1 mass matrix and A = gamma*K + kappa*M (homogeneous Neumann).
///
/// The square root used for sampling and whitening is S = A^{-1} L_M with
/// L_M L_M^T = M, so that S S^T = Gamma exactly. Immutable after construction;
/// the cached factorizations are shared between copies.
class PriorModel {
  public:
    static PriorModel build(int cells_per_side, double gamma, double kappa,
                            std::optional<Vector> mean = std::nullopt);

    const Mesh2D& mesh() const noexcept { return *mesh_; }
    Index dim() const noexcept { return mesh_->node_count(); }
    double gamma() const noexcept { return gamma_; }
    double kappa() const noexcept { return kappa_; }
    static constexpr int alpha = 2;

    const Vector& mean() const noexcept { return mean_; }
    const SparseMatrix& mass() const noexcept { return mass_; }
    const SparseMatrix& stiffness() const noexcept { return stiffness_; }

    /// m = m_prior + S eta.
    Vector sample(const Vector& eta) const;
    Vector sample(std::uint64_t seed, std::uint64_t index = 0) const;

    Vector sqrt_apply(const Vector& eta) const;             // S eta
    Matrix sqrt_apply(const Matrix& etas) const;
    Vector sqrt_transpose_apply(const Vector& x) const;     // S^T x
    Matrix sqrt_transpose_apply(const Matrix& xs) const;
    Vector sqrt_inverse_apply(const Vector& dm) const;      // S^{-1} dm, the whitened coordinates
    Vector precision_apply(const Vector& u) const;          // Gamma^{-1} u
    Matrix precision_apply(const Matrix& us) const;
    Vector covariance_apply(const Vector& v) const;         // Gamma v

    Vector mass_apply(const Vector& u) const { return mass_ * u; }
    Vector mass_solve(const Vector& b) const;
    Vector stiffness_solve(const Vector& b) const;

    /// (A u)^T M^{-1} (A v).
    double inner(const Vector& u, const Vector& v) const;
    double norm_sq(const Vector& u) const { return inner(u, u); }

  private:
    struct Factors;
    std::shared_ptr<const Mesh2D> mesh_;
    double gamma_ = 0.0;
    double kappa_ = 0.0;
    Vector mean_;
    SparseMatrix mass_;
    SparseMatrix stiffness_;
    std::shared_ptr<const Factors> factors_;
};

}  // namespace oed
