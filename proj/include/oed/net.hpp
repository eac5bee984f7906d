#pragma once

#include "oed/linalg.hpp"

namespace oed {

/// A map between reduced coordinates, beta in R^{r_m} -> R^{r_F}, with its Jacobian.
class ReducedMap {
  public:
    virtual ~ReducedMap() = default;
    virtual Index input_dim() const = 0;
    virtual Index output_dim() const = 0;
    virtual Vector forward(const Vector& beta) const = 0;
    virtual Matrix jacobian(const Vector& beta) const = 0;
    /// Both at once; implementations may share work.
    virtual void evaluate(const Vector& beta, Vector& out, Matrix& jac) const {
        out = forward(beta);
        jac = jacobian(beta);
    }
};

struct NetShape {
    Index r_in = 0;
    Index r_out = 0;
    Index width = 100;
    Index blocks = 3;

    Index parameter_count() const noexcept;
    bool operator==(const NetShape&) const = default;
};

/// Residual network
///   z_0     = tanh(Z_in beta + b_in)
///   z_{l+1} = z_l + W_l sigmoid(Z_l z_l + b_l)
///   out     = Z_out tanh(z_L) + b_out
///
/// Parameters live in one flat vector in the order
///   Z_in, b_in, {Z_l, b_l, W_l} per block, Z_out, b_out
/// with matrices stored column-major.
class NeuralNet : public ReducedMap {
  public:
    NeuralNet() = default;
    explicit NeuralNet(NetShape shape);
    NeuralNet(NetShape shape, Vector params);

    /// Xavier-uniform weights, zero biases.
    static NeuralNet xavier(NetShape shape, std::uint64_t seed);

    const NetShape& shape() const noexcept { return shape_; }
    const Vector& params() const noexcept { return params_; }
    Vector& params() noexcept { return params_; }

    Index input_dim() const override { return shape_.r_in; }
    Index output_dim() const override { return shape_.r_out; }
    Vector forward(const Vector& beta) const override;
    Matrix jacobian(const Vector& beta) const override;
    void evaluate(const Vector& beta, Vector& out, Matrix& jac) const override;

    /// Columns are samples.
    Matrix forward_batch(const Matrix& betas) const;
    /// Sample b's Jacobian occupies columns [b r_in, (b+1) r_in).
    Matrix jacobian_batch(const Matrix& betas) const;

    // Parameter views.
    Eigen::Map<const Matrix> z_in() const;
    Eigen::Map<const Vector> b_in() const;
    Eigen::Map<const Matrix> z_block(Index l) const;
    Eigen::Map<const Vector> b_block(Index l) const;
    Eigen::Map<const Matrix> w_block(Index l) const;
    Eigen::Map<const Matrix> z_out() const;
    Eigen::Map<const Vector> b_out() const;

    struct Offsets {
        Index z_in, b_in, z_out, b_out;
        std::vector<Index> z, b, w;
    };
    const Offsets& offsets() const noexcept { return offsets_; }

  private:
    void layout();
    NetShape shape_;
    Vector params_;
    Offsets offsets_{};
};

/// Loss
///   (1/N) sum_n ||beta_F - Phi(beta_m)||^2 + lambda ||J_r - grad Phi(beta_m)||_F^2
/// over a batch (columns of beta_m / beta_f; Jacobians stacked as in jacobian_batch).
/// When grad is non-null it receives the exact parameter gradient.
/// jac may be null only when lambda == 0.
double dino_loss(const NeuralNet& net, const Matrix& beta_m, const Matrix& beta_f, const Matrix* jac, double lambda,
                 Vector* grad);

}  // namespace oed
