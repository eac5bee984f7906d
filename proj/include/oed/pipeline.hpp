#pragma once

#include "oed/config.hpp"
#include "oed/container.hpp"
#include "oed/criteria.hpp"
#include "oed/greedy.hpp"
#include "oed/pde.hpp"
#include "oed/surrogate.hpp"
#include "oed/train.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>

namespace oed {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitValidation = 2, kExitNonconvergence = 3, kExitVerification = 4 };

/// A verification suite found a failing check.
class VerificationFailure : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct CommandOptions {
    std::filesystem::path out = "oed_out";
    int workers = 0;
    std::optional<Backend> backend;
    std::optional<AOptMode> a_opt;
    std::optional<AdamWarmstart> warmstart;
    std::ostream* log = nullptr;  // progress messages; null = silent
};

/// Mesh, prior, forward model and noise built from a config.
struct Setup {
    RunConfig config;
    std::shared_ptr<const Mesh2D> mesh;
    PriorModel prior;
    std::shared_ptr<const ForwardModel> model;
    NoiseModel noise;
};
Setup make_setup(const RunConfig& config);
SensorGrid make_sensors(const Mesh2D& mesh, const std::string& layout, Index count);

/// Applies OED_DINO_SEED when set. Throws DomainError when it is not an integer.
void apply_env_overrides(RunConfig& config);

/// Prior samples and their observables. Sample n uses the training stream at index n.
struct DataBank {
    Matrix parameters;   // N x d_m
    Matrix observables;  // N x d_s
    std::vector<std::uint64_t> keys;
    std::size_t state_solves = 0;

    Index size() const noexcept { return parameters.rows(); }
};
DataBank generate_bank_serial(const ObservationMap& model, const PriorModel& prior, Index n, std::uint64_t seed);
DataBank generate_bank(const ObservationMap& model, const PriorModel& prior, Index n, std::uint64_t seed,
                       int workers = 0);

/// Full Jacobians of the first `count` bank samples (d_s adjoint solves each).
std::vector<Matrix> jacobian_samples(const ObservationMap& model, const Matrix& parameters, Index count,
                                     int workers = 0);

/// Reduced Jacobians Psi_F^T J Psi_m for every bank sample, min(r_m, r_F) solves each.
struct JacobianBank {
    Matrix reduced;  // r_F x (N r_m), sample n in columns [n r_m, (n+1) r_m)
    std::size_t state_solves = 0;
    std::size_t linearized_solves = 0;
};
JacobianBank reduced_jacobian_bank_serial(const ObservationMap& model, const Matrix& parameters,
                                          const ReducedBasis& input, const ReducedBasis& output);
JacobianBank reduced_jacobian_bank(const ObservationMap& model, const Matrix& parameters, const ReducedBasis& input,
                                   const ReducedBasis& output, int workers = 0);

/// Input basis (DIS or KLE) and output basis (PCA or DOS) from a bank.
std::pair<ReducedBasis, ReducedBasis> build_bases(const Setup& setup, const DataBank& bank, int workers = 0,
                                                  std::size_t* linearized_solves = nullptr);

TrainingData encode_training(const DataBank& bank, const JacobianBank* jac, const ReducedBasis& input,
                             const ReducedBasis& output);

/// One training run per seed. Picks the run with the median held-out error
/// (Jacobian error when Jacobians are trained on, output error otherwise).
struct SeedReport {
    std::uint64_t seed = 0;
    double final_loss = 0.0;
    ReducedErrors holdout;
};
struct EnsembleResult {
    std::vector<TrainResult> runs;
    std::vector<SeedReport> reports;
    std::size_t selected = 0;
};
EnsembleResult train_seeds(const TrainingData& data, const NetShape& shape, const TrainConfig& base, int seeds);

// Container (de)serialization.
Container bases_container(const ReducedBasis& input, const ReducedBasis& output);
std::pair<ReducedBasis, ReducedBasis> load_bases(const Container& c, const PriorModel& prior);
Container model_container(const NeuralNet& net, const TrainConfig& cfg);
std::shared_ptr<const Surrogate> load_surrogate(const std::filesystem::path& out, const PriorModel& prior);

// Commands. Each reads and writes containers below opts.out.
void cmd_gen_data(const RunConfig& config, const CommandOptions& opts);
void cmd_reduce(const RunConfig& config, const CommandOptions& opts);
void cmd_train(const RunConfig& config, const CommandOptions& opts);
void cmd_map(const RunConfig& config, const CommandOptions& opts);
void cmd_criteria(const RunConfig& config, const CommandOptions& opts);
void cmd_design(const RunConfig& config, const CommandOptions& opts);
/// Runs the oracle, finite-difference, SMW, Weyl and monotonicity suites.
/// Throws VerificationFailure after writing its container when a check fails.
void cmd_verify(const RunConfig& config, const CommandOptions& opts);

/// Loads the config, applies overrides, runs the command and maps errors to exit codes.
int run_command(const std::string& command, const std::filesystem::path& config_path, const CommandOptions& opts,
                std::ostream& err);

}  // namespace oed
