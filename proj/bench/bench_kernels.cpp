// Serial reference loops vs the OpenMP kernels on the same ensemble sizes.
// QGFBSDE_THREADS caps the worker count of the parallel variants.

#include "qgfbsde/mc.hpp"
#include "qgfbsde/pde.hpp"

#include <benchmark/benchmark.h>

#include <cstdlib>

using namespace qgfbsde;

namespace {

const Model& bench_model() {
    static const Model m(make_spec("-0.5*x", {"1+0.1*tanh(x)"}, "0.1*x + 0.3*y + 0.2*z1 + 0.1*z1^2", "tanh(x)", 1.0, 0.3));
    return m;
}

McConfig bench_config(benchmark::State& state) {
    McConfig c;
    c.paths = static_cast<int>(state.range(0));
    c.steps = 100;
    return c;
}

void BM_ForwardReference(benchmark::State& state) {
    const McConfig c = bench_config(state);
    for (auto _ : state) benchmark::DoNotOptimize(reference::simulate_forward(bench_model(), c).X().data());
    state.SetItemsProcessed(state.iterations() * c.paths * c.steps);
}

void BM_ForwardParallel(benchmark::State& state) {
    const McConfig c = bench_config(state);
    for (auto _ : state) benchmark::DoNotOptimize(simulate_forward(bench_model(), c).X().data());
    state.SetItemsProcessed(state.iterations() * c.paths * c.steps);
}

void BM_VariationalReference(benchmark::State& state) {
    PathEnsemble e = simulate_forward(bench_model(), bench_config(state));
    for (auto _ : state) {
        reference::simulate_variational(e, bench_model());
        benchmark::DoNotOptimize(e.gradX().data());
    }
}

void BM_VariationalParallel(benchmark::State& state) {
    PathEnsemble e = simulate_forward(bench_model(), bench_config(state));
    for (auto _ : state) {
        simulate_variational(e, bench_model());
        benchmark::DoNotOptimize(e.gradX().data());
    }
}

struct WeightInputs {
    PathEnsemble ens;
    BsdeSolution sol;
};

WeightInputs weight_inputs(benchmark::State& state) {
    const McConfig c = bench_config(state);
    PathEnsemble e = simulate_forward(bench_model(), c);
    BsdeSolution s = solve_bsde_regression(e, bench_model(), c);
    return {std::move(e), std::move(s)};
}

void BM_WeightsReference(benchmark::State& state) {
    const WeightInputs in = weight_inputs(state);
    for (auto _ : state) benchmark::DoNotOptimize(reference::malliavin_weights(in.ens, bench_model(), in.sol).e.data());
}

void BM_WeightsParallel(benchmark::State& state) {
    const WeightInputs in = weight_inputs(state);
    for (auto _ : state) benchmark::DoNotOptimize(malliavin_weights(in.ens, bench_model(), in.sol).e.data());
}

void BM_Regression(benchmark::State& state) {
    McConfig c = bench_config(state);
    c.exec = state.range(1) ? Execution::parallel : Execution::serial;
    const PathEnsemble e = simulate_forward(bench_model(), c);
    for (auto _ : state) benchmark::DoNotOptimize(solve_bsde_regression(e, bench_model(), c).y0);
}

void BM_Pde(benchmark::State& state) {
    SchemeParams p;
    p.exec = state.range(1) ? Execution::parallel : Execution::serial;
    const Grid g = default_grid(bench_model(), static_cast<int>(state.range(0)), 400);
    for (auto _ : state) benchmark::DoNotOptimize(solve_pde(bench_model(), g, p).u(0, 0));
}

} // namespace

BENCHMARK(BM_ForwardReference)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardParallel)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_VariationalReference)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_VariationalParallel)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WeightsReference)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WeightsParallel)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Regression)->Args({100000, 0})->Args({100000, 1})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Pde)->Args({401, 0})->Args({401, 1})->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
    if (const char* env = std::getenv("QGFBSDE_THREADS")) set_worker_count(std::atoi(env));
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
