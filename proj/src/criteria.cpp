#include "oed/criteria.hpp"

#include <cmath>
#include <exception>
#include <limits>

#include <omp.h>

namespace oed {

std::string to_string(CriterionKind kind) {
    switch (kind) {
        case CriterionKind::AOpt: return "a-opt";
        case CriterionKind::DOpt: return "d-opt";
        case CriterionKind::EIG: return "eig";
    }
    return "?";
}

std::string to_string(Backend backend) { return backend == Backend::HiFi ? "hifi" : "surrogate"; }
std::string to_string(AOptMode mode) { return mode == AOptMode::Simplified ? "simplified" : "weighted"; }

CriterionKind parse_criterion_kind(const std::string& name) {
    if (name == "a-opt" || name == "a") return CriterionKind::AOpt;
    if (name == "d-opt" || name == "d") return CriterionKind::DOpt;
    if (name == "eig") return CriterionKind::EIG;
    throw DomainError("unknown criterion '" + name + "' (expected a-opt, d-opt or eig)");
}

Backend parse_backend(const std::string& name) {
    if (name == "hifi") return Backend::HiFi;
    if (name == "surrogate") return Backend::Surrogate;
    throw DomainError("unknown backend '" + name + "' (expected hifi or surrogate)");
}

AOptMode parse_a_opt_mode(const std::string& name) {
    if (name == "simplified") return AOptMode::Simplified;
    if (name == "weighted") return AOptMode::Weighted;
    throw DomainError("unknown A-optimality mode '" + name + "' (expected simplified or weighted)");
}

namespace {

double checked(double lambda) {
    if (!std::isfinite(lambda)) throw NumericalError("criterion: non-finite eigenvalue");
    if (lambda < -1e-10) throw NumericalError("criterion: negative eigenvalue " + std::to_string(lambda));
    return std::max(lambda, 0.0);
}

}  // namespace

double a_opt(const Vector& eigvals) {
    double s = 0.0;
    for (Index i = 0; i < eigvals.size(); ++i) {
        const double l = checked(eigvals(i));
        s += l / (1.0 + l);
    }
    return s;
}

double a_opt_weighted(const Vector& eigvals, const Matrix& eigvecs) {
    require(eigvecs.cols() == eigvals.size(), "a_opt_weighted: eigenvector count mismatch");
    double s = 0.0;
    for (Index i = 0; i < eigvals.size(); ++i) {
        const double l = checked(eigvals(i));
        s += l / (1.0 + l) * eigvecs.col(i).squaredNorm();
    }
    return s;
}

double d_opt(const Vector& eigvals) {
    double s = 0.0;
    for (Index i = 0; i < eigvals.size(); ++i) s += std::log1p(checked(eigvals(i)));
    return s;
}

double eig_gain(const Vector& eigvals, const Vector& m_map, const PriorModel& prior) {
    require(m_map.size() == prior.dim(), "eig_gain: MAP point has wrong dimension");
    return d_opt(eigvals) - a_opt(eigvals) + prior.norm_sq(m_map - prior.mean());
}

Vector SaaBank::data(Index sample, const Design& design) const {
    require(sample >= 0 && sample < size(), "SAA bank: sample index out of range");
    return restrict(Vector(observables.row(sample).transpose() + noise.row(sample).transpose()), design);
}

SaaBank build_saa_bank(const ObservationMap& model, const PriorModel& prior, const NoiseModel& noise, Index samples,
                       std::uint64_t seed, int workers) {
    require(samples >= 0, "SAA bank: negative sample count");
    require(model.parameter_dim() == prior.dim() && noise.candidates() == model.observation_dim(),
            "SAA bank: model, prior and noise dimensions disagree");
    SaaBank bank;
    bank.seed = seed;
    bank.parameters.resize(samples, prior.dim());
    bank.observables.resize(samples, model.observation_dim());
    bank.noise.resize(samples, model.observation_dim());
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) num_threads(workers > 0 ? workers : omp_get_max_threads())
    for (Index n = 0; n < samples; ++n) {
        try {
            const Vector m = prior.sample(seed, static_cast<std::uint64_t>(n));
            const Vector f = model.evaluate(m);
            const Vector e = noise.draw(stream_key(seed, Stream::noise, static_cast<std::uint64_t>(n)));
            bank.parameters.row(n) = m.transpose();
            bank.observables.row(n) = f.transpose();
            bank.noise.row(n) = e.transpose();
        } catch (...) {
#pragma omp critical(oed_saa_bank)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return bank;
}

SampleEvaluator hifi_evaluator(const ObservationMap& model, const PriorModel& prior, const NoiseModel& noise,
                               const SaaBank& bank, NewtonCgOptions opts) {
    return [&model, &prior, &noise, &bank, opts](Index sample, const Design& design) {
        InverseProblem problem{&model, &prior, &noise, design, bank.data(sample, design)};
        LaplaceResult res = map_hifi(problem, opts);
        gen_eig_hifi(prior, res, design.size());
        SampleOutcome out;
        out.a = a_opt(res.eigvals);
        out.a_weighted = a_opt_weighted(res.eigvals, res.eigvecs);
        out.d = d_opt(res.eigvals);
        out.eig = eig_gain(res.eigvals, res.m_map, prior);
        out.newton_iterations = res.newton_iterations;
        out.cg_iterations = res.avg_cg_iterations;
        out.linearized_solves = res.linearized_solves;
        out.eigvals = std::move(res.eigvals);
        return out;
    };
}

SampleEvaluator surrogate_evaluator(const Surrogate& surrogate, const PriorModel& prior, const NoiseModel& noise,
                                    const SaaBank& bank, LbfgsOptions lbfgs, std::optional<AdamWarmstart> warmstart) {
    return [&surrogate, &prior, &noise, &bank, lbfgs, warmstart](Index sample, const Design& design) {
        ReducedMapProblem problem{&surrogate, &noise, design, bank.data(sample, design), lbfgs, warmstart};
        ReducedLaplaceResult res = map_reduced(problem);
        eig_reduced(problem, res);
        SampleOutcome out;
        out.a = a_opt(res.eigvals);
        out.a_weighted = a_opt_weighted(res.eigvals, res.lifted_eigvecs);
        out.d = d_opt(res.eigvals);
        out.eig = eig_gain(res.eigvals, res.m_map, prior);
        out.newton_iterations = res.iterations;
        out.eigvals = std::move(res.eigvals);
        return out;
    };
}

namespace {

void evaluate_one(const SampleEvaluator& eval, Index n, const Design& design, SaaEvaluation& out) {
    const auto k = static_cast<std::size_t>(n);
    try {
        out.outcomes[k] = eval(n, design);
        out.ok[k] = 1;
    } catch (const NonConvergence& e) {
        out.errors[k] = e.what();
    } catch (const NumericalError& e) {
        out.errors[k] = e.what();
    }
}

SaaEvaluation prepare(Index samples) {
    require(samples > 0, "SAA evaluation needs at least one sample");
    SaaEvaluation out;
    out.outcomes.resize(static_cast<std::size_t>(samples));
    out.ok.assign(static_cast<std::size_t>(samples), 0);
    out.errors.resize(static_cast<std::size_t>(samples));
    return out;
}

void count_failures(SaaEvaluation& out) {
    out.failures = 0;
    for (char c : out.ok) out.failures += c ? 0 : 1;
}

}  // namespace

SaaEvaluation evaluate_saa_serial(const SampleEvaluator& eval, Index samples, const Design& design) {
    SaaEvaluation out = prepare(samples);
    for (Index n = 0; n < samples; ++n) evaluate_one(eval, n, design, out);
    count_failures(out);
    return out;
}

SaaEvaluation evaluate_saa(const SampleEvaluator& eval, Index samples, const Design& design, int workers) {
    SaaEvaluation out = prepare(samples);
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) num_threads(workers > 0 ? workers : omp_get_max_threads())
    for (Index n = 0; n < samples; ++n) {
        try {
            evaluate_one(eval, n, design, out);
        } catch (...) {
#pragma omp critical(oed_saa_eval)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    count_failures(out);
    return out;
}

CriterionValue summarize(const SaaEvaluation& eval, CriterionKind kind, AOptMode mode) {
    CriterionValue cv;
    cv.kind = kind;
    cv.failures = eval.failures;
    const Index n = eval.size();
    require(n > 0, "summarize: empty evaluation");
    if (10 * eval.failures > n) {
        std::string first;
        for (const auto& e : eval.errors)
            if (!e.empty()) {
                first = e;
                break;
            }
        throw NonConvergence(std::to_string(eval.failures) + " of " + std::to_string(n) +
                                 " SAA samples failed (first: " + first + ")",
                             static_cast<double>(eval.failures));
    }
    cv.per_sample = Vector::Constant(n, std::numeric_limits<double>::quiet_NaN());
    double sum = 0.0;
    for (Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (!eval.ok[k]) continue;
        const SampleOutcome& o = eval.outcomes[k];
        double v = 0.0;
        switch (kind) {
            case CriterionKind::AOpt: v = mode == AOptMode::Simplified ? o.a : o.a_weighted; break;
            case CriterionKind::DOpt: v = o.d; break;
            case CriterionKind::EIG: v = o.eig; break;
        }
        cv.per_sample(i) = v;
        sum += v;
    }
    cv.value = sum / static_cast<double>(n - eval.failures);
    return cv;
}

CriterionValue expected_criterion(const SampleEvaluator& eval, Index samples, const Design& design, CriterionKind kind,
                                  AOptMode mode, int workers) {
    return summarize(evaluate_saa(eval, samples, design, workers), kind, mode);
}

}  // namespace oed
