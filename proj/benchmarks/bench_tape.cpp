#include "pgdpo/policy.hpp"
#include "pgdpo/tape.hpp"

#include <benchmark/benchmark.h>

namespace {

pgdpo::PolicyNet make_net(pgdpo::Index n, pgdpo::Index width) {
    pgdpo::NetShape shape;
    shape.head = pgdpo::HeadKind::Identity;
    shape.assets = n;
    shape.hidden1 = shape.hidden2 = width;
    pgdpo::PolicyNet net(shape);
    net.init_params(1, 0);
    return net;
}

// One taped forward pass of the investment net plus the reverse sweep.
void BM_NetForwardBackward(benchmark::State& state) {
    const auto batch = static_cast<pgdpo::Index>(state.range(0));
    const auto net = make_net(10, 200);
    const pgdpo::Vector t = pgdpo::Vector::LinSpaced(batch, 0.0, 1.0);
    const pgdpo::Matrix x = pgdpo::Matrix::Constant(batch, 1, 1.0);
    for (auto _ : state) {
        pgdpo::Tape tape;
        const auto p = net.bind(tape);
        const auto xn = tape.variable(x);
        const auto out = tape.sum_all(net.forward(tape, p, t, xn));
        tape.backward(out);
        benchmark::DoNotOptimize(net.gradient(tape, p));
    }
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_NetForwardBackward)->Arg(64)->Arg(256)->Arg(1000)->Unit(benchmark::kMicrosecond);

void BM_NetForwardPlain(benchmark::State& state) {
    const auto batch = static_cast<pgdpo::Index>(state.range(0));
    const auto net = make_net(10, 200);
    const pgdpo::Vector t = pgdpo::Vector::LinSpaced(batch, 0.0, 1.0);
    const pgdpo::Vector x = pgdpo::Vector::Constant(batch, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(t, x));
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_NetForwardPlain)->Arg(256)->Unit(benchmark::kMicrosecond);

}  // namespace
