#include "oed/pipeline.hpp"

#include <doctest.h>

using namespace oed;

namespace {

Setup small_setup() {
    return make_setup(parse_config("problem.kind = reaction\nmesh.n = 8\nsensors.layout = full\nsensors.count = 10\n"
                                   "reduce.r_m = 5\nreduce.r_f = 4\noed.r_s = 3\nnoise.sigma = 0.02\n"));
}

}  // namespace

TEST_CASE("Gram accumulation") {
    std::vector<Matrix> blocks;
    for (std::uint64_t k = 0; k < 37; ++k) {
        Matrix x(4, 9);
        for (Index i = 0; i < 4; ++i) x.row(i) = standard_normal(9, 1000 * k + static_cast<std::uint64_t>(i)).transpose();
        blocks.push_back(x);
    }
    const Matrix serial = gram_serial(blocks);
    const Matrix one = gram_parallel(blocks, 1);
    CHECK((serial - one).norm() < 1e-13 * serial.norm());
    for (int w : {2, 3, 4}) CHECK(gram_parallel(blocks, w) == one);
}

TEST_CASE("data bank") {
    const Setup s = small_setup();
    const DataBank serial = generate_bank_serial(*s.model, s.prior, 9, 4);
    for (int w : {1, 2, 3}) {
        const DataBank par = generate_bank(*s.model, s.prior, 9, 4, w);
        CHECK(par.parameters == serial.parameters);
        CHECK(par.observables == serial.observables);
        CHECK(par.keys == serial.keys);
        CHECK(par.state_solves == serial.state_solves);
    }
}

TEST_CASE("reduced Jacobian bank") {
    const Setup s = small_setup();
    const DataBank bank = generate_bank_serial(*s.model, s.prior, 6, 5);
    const auto [in, out] = build_bases(s, bank, 1);
    const JacobianBank serial = reduced_jacobian_bank_serial(*s.model, bank.parameters, in, out);
    for (int w : {1, 2, 3}) {
        const JacobianBank par = reduced_jacobian_bank(*s.model, bank.parameters, in, out, w);
        CHECK(par.reduced == serial.reduced);
        CHECK(par.linearized_solves == serial.linearized_solves);
        CHECK(par.state_solves == serial.state_solves);
    }
    const auto [in2, out2] = build_bases(s, bank, 3);
    CHECK(in2.columns == in.columns);
    CHECK(out2.columns == out.columns);
}

TEST_CASE("SAA evaluation") {
    const Setup s = small_setup();
    const SaaBank bank = build_saa_bank(*s.model, s.prior, s.noise, 6, 6, 1);
    CHECK(build_saa_bank(*s.model, s.prior, s.noise, 6, 6, 3).observables == bank.observables);
    const SampleEvaluator eval = hifi_evaluator(*s.model, s.prior, s.noise, bank);
    const Design d{{1, 4, 8}};
    const SaaEvaluation serial = evaluate_saa_serial(eval, 6, d);
    for (int w : {1, 2, 3}) {
        const SaaEvaluation par = evaluate_saa(eval, 6, d, w);
        REQUIRE(par.size() == serial.size());
        CHECK(par.failures == serial.failures);
        for (Index i = 0; i < par.size(); ++i) {
            const auto k = static_cast<std::size_t>(i);
            CHECK(par.outcomes[k].d == serial.outcomes[k].d);
            CHECK(par.outcomes[k].eig == serial.outcomes[k].eig);
            CHECK(par.outcomes[k].eigvals == serial.outcomes[k].eigvals);
        }
        CHECK(summarize(par, CriterionKind::EIG).value == summarize(serial, CriterionKind::EIG).value);
    }
}
