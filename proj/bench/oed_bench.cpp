// Serial reference kernels against their OpenMP counterparts.
// Arg(0) runs the serial twin, Arg(w > 0) the parallel kernel with w workers.
#include "oed/pipeline.hpp"

#include <benchmark/benchmark.h>

using namespace oed;

namespace {

const Setup& setup() {
    static const Setup s = make_setup(parse_config("mesh.n = 16\nsensors.count = 50\nreduce.r_m = 16\nreduce.r_f = 16\n"
                                                   "reduce.n_saa_basis = 16\nseed = 1\n"));
    return s;
}

const DataBank& bank() {
    static const DataBank b = generate_bank_serial(*setup().model, setup().prior, 32, 1);
    return b;
}

const std::pair<ReducedBasis, ReducedBasis>& bases() {
    static const auto b = build_bases(setup(), bank(), 1);
    return b;
}

void BM_Gram(benchmark::State& state) {
    std::vector<Matrix> blocks;
    for (std::uint64_t k = 0; k < 64; ++k) {
        Matrix x(50, 289);
        for (Index i = 0; i < 50; ++i) x.row(i) = standard_normal(289, 64 * k + static_cast<std::uint64_t>(i)).transpose();
        blocks.push_back(std::move(x));
    }
    const int w = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(w == 0 ? gram_serial(blocks) : gram_parallel(blocks, w));
}

void BM_DataBank(benchmark::State& state) {
    const int w = static_cast<int>(state.range(0));
    for (auto _ : state) {
        DataBank b = w == 0 ? generate_bank_serial(*setup().model, setup().prior, 32, 2)
                            : generate_bank(*setup().model, setup().prior, 32, 2, w);
        benchmark::DoNotOptimize(b.observables.data());
    }
}

void BM_ReducedJacobianBank(benchmark::State& state) {
    const int w = static_cast<int>(state.range(0));
    const auto& [in, out] = bases();
    for (auto _ : state) {
        JacobianBank j = w == 0 ? reduced_jacobian_bank_serial(*setup().model, bank().parameters, in, out)
                                : reduced_jacobian_bank(*setup().model, bank().parameters, in, out, w);
        benchmark::DoNotOptimize(j.reduced.data());
    }
}

void BM_SaaEvaluation(benchmark::State& state) {
    const int w = static_cast<int>(state.range(0));
    const Setup& s = setup();
    const SaaBank saa = build_saa_bank(*s.model, s.prior, s.noise, 16, 3, 1);
    const SampleEvaluator eval = hifi_evaluator(*s.model, s.prior, s.noise, saa);
    const Design d{{0, 10, 20, 30, 40}};
    for (auto _ : state) {
        SaaEvaluation e = w == 0 ? evaluate_saa_serial(eval, 16, d) : evaluate_saa(eval, 16, d, w);
        benchmark::DoNotOptimize(e.outcomes.data());
    }
}

}  // namespace

BENCHMARK(BM_Gram)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DataBank)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ReducedJacobianBank)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SaaEvaluation)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
