#pragma once

#include "oed/net.hpp"

#include <vector>

namespace oed {

/// Encoded training pairs. Columns are samples; sample n's reduced Jacobian
/// occupies columns [n r_m, (n+1) r_m) of `jac`.
struct TrainingData {
    Matrix beta_m;
    Matrix beta_f;
    Matrix jac;

    Index size() const noexcept { return beta_m.cols(); }
    Index r_m() const noexcept { return beta_m.rows(); }
    Index r_f() const noexcept { return beta_f.rows(); }
    bool has_jacobians() const noexcept { return jac.size() > 0; }

    void validate() const;
    /// Samples [first, first + count).
    TrainingData slice(Index first, Index count) const;
    TrainingData gather(const std::vector<Index>& columns) const;
};

struct TrainConfig {
    int epochs = 200;
    double lr = 1e-3;
    double lambda_jac = 1.0;
    Index batch = 32;
    std::uint64_t seed = 0;
    double holdout_fraction = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
};

struct TrainResult {
    NeuralNet net;
    double initial_loss = 0.0;          // full training-split loss before the first step
    double final_loss = 0.0;            // full training-split loss after the last epoch
    std::vector<double> epoch_loss;     // mean batch loss per epoch
    std::vector<double> holdout_loss;   // held-out loss per epoch (empty without a split)
    Index n_train = 0;
    Index n_holdout = 0;
};

/// Train with Adam from a Xavier-uniform start. The last ceil(holdout_fraction N)
/// samples are held out. Throws NumericalError on a non-finite loss.
TrainResult train_dino(const TrainingData& data, NetShape shape, const TrainConfig& config);

/// Mean relative errors in reduced coordinates:
///   ||beta_F - Phi(beta_m)|| / ||beta_F|| and ||J_r - grad Phi|| / ||J_r||.
struct ReducedErrors {
    double output = 0.0;
    double jacobian = 0.0;
};
ReducedErrors reduced_errors(const ReducedMap& map, const TrainingData& data);

/// Median of a non-empty sample (mean of the two middle values for even sizes).
double median(std::vector<double> values);

}  // namespace oed
