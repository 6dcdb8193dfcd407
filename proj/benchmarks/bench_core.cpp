#include "qrbsde/forward.hpp"
#include "qrbsde/oracle.hpp"
#include "qrbsde/regress.hpp"
#include "qrbsde/scheme.hpp"

#include <benchmark/benchmark.h>

using namespace qrbsde;

static void BM_IncrementSampling(benchmark::State& state) {
    const TimeGrid g = uniform_grid(64, 1.0);
    const auto paths = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(sample_increments(g, paths, 42, 1).dW.data());
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(paths * 64));
}
BENCHMARK(BM_IncrementSampling)->Arg(10000)->Arg(50000);

static void BM_RegressionFit(benchmark::State& state) {
    const TimeGrid g = uniform_grid(1, 1.0);
    const auto n = static_cast<std::size_t>(state.range(0));
    const PathBundle b = sample_increments(g, n, 1, 1);
    std::vector<double> xs(b.dW.begin(), b.dW.end()), ys(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = xs[i] * xs[i];
    const Basis basis(BasisSpec::polynomial(6), xs);
    for (auto _ : state) benchmark::DoNotOptimize(fit_least_squares(basis, xs, ys, 1e-8).coefficients.data());
}
BENCHMARK(BM_RegressionFit)->Arg(10000)->Arg(50000);

static void BM_SolveBackward(benchmark::State& state) {
    const ProblemSpec s = build_preset(kPresetPureQuadratic);
    const auto [g, r] = make_grid(static_cast<std::size_t>(state.range(0)), s.T, ReflectionPolicy::all());
    const PathBundle b = euler_simulate(s, g, sample_increments(g, 20000, 42, 1));
    for (auto _ : state)
        benchmark::DoNotOptimize(
            solve_backward(s, g, r, b, BasisSpec::polynomial(6), TruncationRadius::user(5.0)).y0);
}
BENCHMARK(BM_SolveBackward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_ExactSchemeOracle(benchmark::State& state) {
    const ProblemSpec s = build_preset(kPresetPureQuadratic);
    const auto [g, r] = make_grid(static_cast<std::size_t>(state.range(0)), s.T, ReflectionPolicy::all());
    const SpaceGrid sp = make_space_grid(s, g);
    for (auto _ : state)
        benchmark::DoNotOptimize(exact_scheme_solve(s, g, r, sp, TruncationRadius::user(1e9)).y0(s.x0));
}
BENCHMARK(BM_ExactSchemeOracle)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
