#include "pgdpo/linalg.hpp"
#include "pgdpo/market.hpp"

#include <benchmark/benchmark.h>

namespace {

void BM_CholeskyFactor(benchmark::State& state) {
    const auto n = static_cast<pgdpo::Index>(state.range(0));
    pgdpo::MarketConfig cfg;
    cfg.n = n;
    const auto m = pgdpo::generate_market(cfg);
    const pgdpo::Matrix a = m.sigma_cov.entries();
    for (auto _ : state) benchmark::DoNotOptimize(pgdpo::cholesky_factor(a));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CholeskyFactor)->RangeMultiplier(10)->Range(10, 1000)->Complexity(benchmark::oNCubed);

void BM_GenerateMarket(benchmark::State& state) {
    pgdpo::MarketConfig cfg;
    cfg.n = static_cast<pgdpo::Index>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(pgdpo::generate_market(cfg));
}
BENCHMARK(BM_GenerateMarket)->Arg(10)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace
