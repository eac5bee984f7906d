#pragma once

#include "oed/forward.hpp"
#include "oed/net.hpp"
#include "oed/prior.hpp"
#include "oed/reduce.hpp"

#include <memory>

namespace oed {

/// Affine reduced map beta -> offset + G beta.
class LinearReducedMap : public ReducedMap {
  public:
    LinearReducedMap(Vector offset, Matrix jac);

    Index input_dim() const override { return jac_.cols(); }
    Index output_dim() const override { return jac_.rows(); }
    Vector forward(const Vector& beta) const override;
    Matrix jacobian(const Vector&) const override { return jac_; }

  private:
    Vector offset_;
    Matrix jac_;
};

/// Reduced map obtained from the true model: beta -> Psi_F^T (F(m_prior + Psi_m beta) - center).
class ExactReducedMap : public ReducedMap {
  public:
    ExactReducedMap(std::shared_ptr<const ObservationMap> model, ReducedBasis input, ReducedBasis output);

    Index input_dim() const override { return input_.rank(); }
    Index output_dim() const override { return output_.rank(); }
    Vector forward(const Vector& beta) const override;
    Matrix jacobian(const Vector& beta) const override;
    void evaluate(const Vector& beta, Vector& out, Matrix& jac) const override;

  private:
    std::shared_ptr<const ObservationMap> model_;
    ReducedBasis input_;
    ReducedBasis output_;
};

/// F_NN(m) = F_center + Psi_F Phi(Psi_m^T Gamma^{-1} (m - m_prior)).
/// Its Jacobian is Psi_F grad(Phi) Psi_m^T Gamma^{-1}, never formed unless asked for.
class Surrogate : public ObservationMap {
  public:
    Surrogate(ReducedBasis input, ReducedBasis output, std::shared_ptr<const ReducedMap> map);

    const ReducedBasis& input_basis() const noexcept { return input_; }
    const ReducedBasis& output_basis() const noexcept { return output_; }
    const ReducedMap& reduced_map() const noexcept { return *map_; }
    std::shared_ptr<const ReducedMap> reduced_map_ptr() const noexcept { return map_; }
    /// Gamma_m = Psi_m^T Gamma^{-1} Psi_m.
    const Matrix& input_gram() const noexcept { return gram_; }

    Index parameter_dim() const override { return input_.dim(); }
    Index observation_dim() const override { return output_.dim(); }
    Vector evaluate(const Vector& m) const override;
    std::unique_ptr<Linearization> linearize(const Vector& m) const override;

    Vector encode(const Vector& m) const { return encode_input(input_, m); }
    Vector lift(const Vector& beta) const { return decode_input(input_, beta); }
    /// F_center + Psi_F Phi(beta).
    Vector forward_reduced(const Vector& beta) const;
    Matrix jacobian_full(const Vector& m) const;

  private:
    ReducedBasis input_;
    ReducedBasis output_;
    std::shared_ptr<const ReducedMap> map_;
    Matrix gram_;
};

}  // namespace oed
