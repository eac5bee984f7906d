#include "oed/criteria.hpp"
#include "oed/oracle.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace oed;

TEST_CASE("closed form criteria") {
    CHECK(a_opt(Vector(0)) == 0.0);
    CHECK(a_opt(Vector::Ones(1)) == doctest::Approx(0.5));
    CHECK(a_opt((Vector(2) << 3, 1).finished()) == doctest::Approx(1.25));
    CHECK(a_opt((Vector(2) << 2, -1e-12).finished()) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(a_opt((Vector(2) << 2, -1e-3).finished()), NumericalError);

    CHECK(d_opt(Vector::Zero(2)) == 0.0);
    CHECK(d_opt(Vector::Constant(1, std::exp(1.0) - 1.0)) == doctest::Approx(1.0));

    const PriorModel prior = PriorModel::build(4, 0.1, 0.5);
    CHECK(eig_gain(Vector::Ones(1), prior.mean(), prior) == doctest::Approx(std::log(2.0) - 0.5));

    SUBCASE("weighted A-optimality with unit columns") {
        const Vector lam = (Vector(3) << 4, 1, 0.5).finished();
        const Matrix q = test::random_orthonormal(7, 3, 2);
        CHECK(a_opt_weighted(lam, q) == doctest::Approx(a_opt(lam)).epsilon(1e-12));
        CHECK(a_opt_weighted(lam, 2.0 * q) == doctest::Approx(4.0 * a_opt(lam)).epsilon(1e-12));
    }
}

TEST_CASE("names") {
    CHECK(parse_criterion_kind("eig") == CriterionKind::EIG);
    CHECK(parse_backend(to_string(Backend::Surrogate)) == Backend::Surrogate);
    CHECK(parse_a_opt_mode("weighted") == AOptMode::Weighted);
    CHECK_THROWS_AS(parse_backend("gpu"), DomainError);
    CHECK_THROWS_AS(parse_criterion_kind("E"), DomainError);
}

TEST_CASE("D-optimality against a dense log determinant") {
    const PriorModel prior = PriorModel::build(6, 0.1, 0.5);
    auto map = random_linear_map(prior, SensorGrid::full(prior.mesh(), 8), 3);
    const NoiseModel noise = NoiseModel::isotropic(8, 0.1);
    const Design d{{0, 2, 3, 5, 7}};
    InverseProblem p{map.get(), &prior, &noise, d, restrict(map->evaluate(prior.mean()), d)};
    const LaplaceResult r = gen_eig_hifi(p, prior.mean(), 5);
    const Matrix a = restrict_rows(map->matrix(), d);
    const Matrix cov = test::dense_prior_covariance(prior.mesh(), 0.1, 0.5);
    const Matrix k = Matrix::Identity(5, 5) + a * cov * a.transpose() / 0.01;
    CHECK(d_opt(r.eigvals) == doctest::Approx(std::log(k.determinant())).epsilon(1e-9));
    // A-optimality is the trace reduction in whitened coordinates.
    CHECK(a_opt(r.eigvals) == doctest::Approx((Matrix::Identity(5, 5) - k.inverse()).trace()).epsilon(1e-9));
}

TEST_CASE("SAA bank") {
    const PriorModel prior = PriorModel::build(4, 0.1, 0.5);
    auto map = random_linear_map(prior, SensorGrid::full(prior.mesh(), 6), 4);
    const NoiseModel noise = NoiseModel::isotropic(6, 0.2);
    const SaaBank bank = build_saa_bank(*map, prior, noise, 5, 9);
    CHECK(bank.size() == 5);
    CHECK(bank.candidates() == 6);
    const Design d{{4, 1}};
    const Vector y = bank.data(3, d);
    CHECK(y(0) == bank.observables(3, 4) + bank.noise(3, 4));
    CHECK(y(1) == bank.observables(3, 1) + bank.noise(3, 1));
    CHECK(test::rel_err(Vector(bank.observables.row(2).transpose()),
                        map->evaluate(bank.parameters.row(2).transpose())) < 1e-14);
    const SaaBank again = build_saa_bank(*map, prior, noise, 5, 9);
    CHECK(again.parameters == bank.parameters);
    CHECK(again.noise == bank.noise);
}

TEST_CASE("expected information gain by Monte Carlo") {
    // For a linear Gaussian model the data average of eig_gain equals sum log(1 + lambda).
    const PriorModel prior = PriorModel::build(4, 0.1, 0.5);
    auto map = random_linear_map(prior, SensorGrid::full(prior.mesh(), 6), 5);
    const NoiseModel noise = NoiseModel::isotropic(6, 0.1);
    const SaaBank bank = build_saa_bank(*map, prior, noise, 512, 11);
    const SampleEvaluator eval = hifi_evaluator(*map, prior, noise, bank);
    const Design d{{0, 1, 3, 5}};
    const SaaEvaluation ev = evaluate_saa(eval, 512, d);
    REQUIRE(ev.failures == 0);
    const CriterionValue eig = summarize(ev, CriterionKind::EIG);
    const CriterionValue dv = summarize(ev, CriterionKind::DOpt);
    const double sd = std::sqrt((eig.per_sample.array() - eig.value).square().sum() / 511.0);
    MESSAGE("EIG estimate " << eig.value << " vs " << dv.value << " (sd of mean " << sd / std::sqrt(512.0) << ")");
    CHECK(std::abs(eig.value - dv.value) < 3.0 * sd / std::sqrt(512.0));
    // Linear model: D-optimality does not depend on the sample.
    CHECK((dv.per_sample.array() - dv.value).abs().maxCoeff() < 1e-10 * dv.value);
}

TEST_CASE("empty design carries no information") {
    const PriorModel prior = PriorModel::build(4, 0.1, 0.5);
    auto map = random_linear_map(prior, SensorGrid::full(prior.mesh(), 6), 6);
    const NoiseModel noise = NoiseModel::isotropic(6, 0.1);
    const SaaBank bank = build_saa_bank(*map, prior, noise, 4, 12);
    const SampleEvaluator eval = hifi_evaluator(*map, prior, noise, bank);
    for (CriterionKind k : {CriterionKind::AOpt, CriterionKind::DOpt, CriterionKind::EIG})
        CHECK(expected_criterion(eval, 4, Design{}, k).value == 0.0);
}

TEST_CASE("failed samples") {
    SaaEvaluation ev;
    for (int i = 0; i < 20; ++i) {
        SampleOutcome o;
        o.d = static_cast<double>(i);
        ev.outcomes.push_back(o);
        ev.ok.push_back(1);
        ev.errors.emplace_back();
    }
    ev.ok[3] = 0;
    ev.ok[7] = 0;
    ev.failures = 2;
    const CriterionValue v = summarize(ev, CriterionKind::DOpt);
    CHECK(v.failures == 2);
    CHECK(std::isnan(v.per_sample(3)));
    CHECK(v.value == doctest::Approx((190.0 - 10.0) / 18.0));
    ev.ok[9] = 0;
    ev.failures = 3;
    CHECK_THROWS_AS(summarize(ev, CriterionKind::DOpt), NonConvergence);

    SUBCASE("evaluator exceptions are recorded") {
        const SampleEvaluator flaky = [](Index i, const Design&) {
            if (i == 5) throw NonConvergence("no", 1.0);
            SampleOutcome o;
            o.a = 1.0;
            return o;
        };
        const SaaEvaluation e = evaluate_saa(flaky, 40, Design{});
        CHECK(e.failures == 1);
        CHECK_FALSE(e.ok[5]);
        CHECK(summarize(e, CriterionKind::AOpt).value == 1.0);
    }
}
