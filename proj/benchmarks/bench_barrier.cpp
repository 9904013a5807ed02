#include "pgdpo/barrier.hpp"

#include <benchmark/benchmark.h>

namespace {

void BM_BarrierContinuation(benchmark::State& state) {
    pgdpo::MarketConfig mc;
    mc.n = static_cast<pgdpo::Index>(state.range(0));
    const auto m = pgdpo::generate_market(mc);
    pgdpo::BarrierSystem sys;
    sys.market = &m;
    sys.lambda = 0.9;
    sys.lambda_slope = -1.8;
    for (auto _ : state) benchmark::DoNotOptimize(pgdpo::solve_with_continuation(sys));
}
BENCHMARK(BM_BarrierContinuation)->Arg(10)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_KktEnumeration(benchmark::State& state) {
    pgdpo::MarketConfig mc;
    mc.n = static_cast<pgdpo::Index>(state.range(0));
    const auto m = pgdpo::generate_market(mc);
    pgdpo::BarrierSystem sys;
    sys.market = &m;
    for (auto _ : state) benchmark::DoNotOptimize(pgdpo::kkt_enumerate_oracle(sys));
}
BENCHMARK(BM_KktEnumeration)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace
