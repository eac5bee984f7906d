#pragma once

#include "oed/laplace.hpp"
#include "oed/reduced_laplace.hpp"

#include <functional>
#include <vector>

namespace oed {

enum class CriterionKind { AOpt, DOpt, EIG };
enum class Backend { HiFi, Surrogate };
/// simplified: sum lambda/(1+lambda). weighted: trace(W D W^T) with Euclidean column norms.
enum class AOptMode { Simplified, Weighted };

std::string to_string(CriterionKind kind);
std::string to_string(Backend backend);
std::string to_string(AOptMode mode);
CriterionKind parse_criterion_kind(const std::string& name);
Backend parse_backend(const std::string& name);
AOptMode parse_a_opt_mode(const std::string& name);

/// sum lambda_i / (1 + lambda_i). Entries in [-1e-10, 0) are treated as 0; more
/// negative ones throw NumericalError.
double a_opt(const Vector& eigvals);
/// sum lambda_i / (1 + lambda_i) ||w_i||^2.
double a_opt_weighted(const Vector& eigvals, const Matrix& eigvecs);
/// sum log(1 + lambda_i).
double d_opt(const Vector& eigvals);
/// d_opt - a_opt + ||m_map - m_prior||^2_{Gamma^{-1}}.
double eig_gain(const Vector& eigvals, const Vector& m_map, const PriorModel& prior);

/// Prior draws with their observables and noise at every candidate, so one bank
/// serves every design: y_n(xi) = restrict(F_n + eps_n, xi).
struct SaaBank {
    Matrix parameters;   // N x d_m
    Matrix observables;  // N x d_s
    Matrix noise;        // N x d_s
    std::uint64_t seed = 0;

    Index size() const noexcept { return parameters.rows(); }
    Index candidates() const noexcept { return observables.cols(); }
    Vector data(Index sample, const Design& design) const;
};

SaaBank build_saa_bank(const ObservationMap& model, const PriorModel& prior, const NoiseModel& noise, Index samples,
                       std::uint64_t seed, int workers = 0);

/// Everything one MAP + eigen solve yields for one bank sample.
struct SampleOutcome {
    double a = 0.0;
    double a_weighted = 0.0;
    double d = 0.0;
    double eig = 0.0;
    int newton_iterations = 0;    // Newton (hifi) or LBFGS (surrogate) iterations
    double cg_iterations = 0.0;   // average per Newton step; 0 for the surrogate
    std::size_t linearized_solves = 0;
    Vector eigvals;
};

using SampleEvaluator = std::function<SampleOutcome(Index sample, const Design& design)>;

/// Hifi path: map_hifi, then gen_eig_hifi at full rank r_s.
SampleEvaluator hifi_evaluator(const ObservationMap& model, const PriorModel& prior, const NoiseModel& noise,
                               const SaaBank& bank, NewtonCgOptions opts = {});
/// Surrogate path: map_reduced, then eig_reduced.
SampleEvaluator surrogate_evaluator(const Surrogate& surrogate, const PriorModel& prior, const NoiseModel& noise,
                                    const SaaBank& bank, LbfgsOptions lbfgs = {},
                                    std::optional<AdamWarmstart> warmstart = std::nullopt);

/// Outcomes for samples [0, N). Failed samples (NonConvergence, NumericalError)
/// are marked and counted, never averaged in.
struct SaaEvaluation {
    std::vector<SampleOutcome> outcomes;
    std::vector<char> ok;
    std::vector<std::string> errors;
    Index failures = 0;

    Index size() const noexcept { return static_cast<Index>(outcomes.size()); }
};

SaaEvaluation evaluate_saa_serial(const SampleEvaluator& eval, Index samples, const Design& design);
SaaEvaluation evaluate_saa(const SampleEvaluator& eval, Index samples, const Design& design, int workers = 0);

struct CriterionValue {
    CriterionKind kind = CriterionKind::DOpt;
    double value = 0.0;
    Vector per_sample;  // NaN where the sample failed
    Index failures = 0;
};

/// Mean over successful samples, summed in sample order. Throws NonConvergence
/// when more than 10% of the samples failed.
CriterionValue summarize(const SaaEvaluation& eval, CriterionKind kind, AOptMode mode = AOptMode::Simplified);

CriterionValue expected_criterion(const SampleEvaluator& eval, Index samples, const Design& design, CriterionKind kind,
                                  AOptMode mode = AOptMode::Simplified, int workers = 0);

}  // namespace oed
