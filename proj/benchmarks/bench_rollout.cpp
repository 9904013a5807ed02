#include "pgdpo/costate.hpp"
#include "pgdpo/training.hpp"

#include <benchmark/benchmark.h>

namespace {

struct Fixture {
    pgdpo::MarketParams market;
    pgdpo::RolloutConfig rollout;
    pgdpo::PolicyNet inv;
    pgdpo::PolicyNet cons;

    explicit Fixture(pgdpo::Index n) {
        pgdpo::MarketConfig mc;
        mc.n = n;
        market = pgdpo::generate_market(mc);
        pgdpo::TrainConfig cfg;
        inv = pgdpo::PolicyNet(pgdpo::investment_shape(cfg, n, rollout.horizon));
        cons = pgdpo::PolicyNet(pgdpo::consumption_shape(cfg, n, rollout.horizon));
        inv.init_params(1, 0);
        cons.init_params(1, 1);
    }
};

// One training gradient: taped rollout plus reverse sweep, batch 256.
void BM_AutodiffGradient(benchmark::State& state) {
    Fixture f(static_cast<pgdpo::Index>(state.range(0)));
    pgdpo::Simulator sim(f.market, f.rollout);
    const auto in = pgdpo::make_batch(f.rollout, f.market.n, 256, 42, 0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            pgdpo::autodiff_gradient(sim, f.inv, f.cons, pgdpo::ConsumptionForm::WealthFraction, in, 128));
    }
}
BENCHMARK(BM_AutodiffGradient)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_CostateExtraction(benchmark::State& state) {
    Fixture f(10);
    pgdpo::Simulator sim(f.market, f.rollout);
    const auto in = pgdpo::make_batch(f.rollout, f.market.n, static_cast<pgdpo::Index>(state.range(0)), 42, 0);
    pgdpo::NetPolicy policy(f.inv, f.cons);
    for (auto _ : state) benchmark::DoNotOptimize(pgdpo::extract_costates(sim, policy, in));
}
BENCHMARK(BM_CostateExtraction)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
