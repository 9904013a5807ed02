#include "pgdpo/costate.hpp"
#include "pgdpo/merton.hpp"
#include "pgdpo/random.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <memory>

using namespace pgdpo;
using pgdpo::testing::FixedPolicy;
using pgdpo::testing::batch_at;
using pgdpo::testing::small_market;

namespace {

struct Nets {
    PolicyNet inv;
    PolicyNet cons;
};

Nets make_nets(Index n, HeadKind head, std::uint64_t seed, Index width = 200) {
    NetShape is;
    is.head = head;
    is.assets = n;
    is.hidden1 = is.hidden2 = width;
    NetShape cs = is;
    cs.head = HeadKind::Positive;
    Nets nets{PolicyNet(is), PolicyNet(cs)};
    nets.inv.init_params(seed, 0);
    nets.cons.init_params(seed, 1);
    return nets;
}

double objective_at(const Simulator& sim, ControlPolicy& policy, BatchInputs in, double x0) {
    in.x0.setConstant(x0);
    return sim.simulate(policy, in).j(0);
}

}  // namespace

TEST(Costate, TerminalNodeClosedForms) {
    const auto m = small_market(2);
    RolloutConfig cfg;
    cfg.kappa_bequest = 0.8;
    Simulator sim(m, cfg);
    auto nets = make_nets(2, HeadKind::Identity, 3, 32);
    NetPolicy policy(nets.inv, nets.cons);
    const auto in = make_batch(cfg, 2, 6, 42, 0);
    CostateOptions second;
    second.method = SlopeMethod::SecondOrder;
    const auto samples = extract_costates(sim, policy, in, second);
    for (const auto& s : samples) {
        if (s.step != cfg.steps) continue;
        const double lam = 0.8 * std::exp(-cfg.rho) * std::pow(s.x, -cfg.gamma);
        EXPECT_NEAR(s.lambda, lam, 1e-14 * lam);
        EXPECT_NEAR(s.dlambda_dx, -cfg.gamma * lam / s.x, 1e-13 * lam / s.x);
    }
}

TEST(Costate, FullPathAdjointEqualsSubRollout) {
    const auto m = small_market(3);
    RolloutConfig cfg;
    Simulator sim(m, cfg);
    auto nets = make_nets(3, HeadKind::Simplex, 4, 64);
    NetPolicy policy(nets.inv, nets.cons);
    const auto in = make_batch(cfg, 3, 10, 42, 1);
    const Matrix lam = lambda_path(sim, policy, in);
    const auto batch = sim.simulate(policy, in);
    for (int k = 0; k <= cfg.steps; ++k) {
        const auto nc = node_costates(sim, policy, in, k, batch.x.col(k));
        for (Index i = 0; i < in.size(); ++i) EXPECT_NEAR(nc.lambda(i), lam(i, k), 1e-12 * std::abs(lam(i, k)));
    }
}

TEST(Costate, LambdaZeroMatchesCrnFiniteDifferenceTwoSteps) {
    const auto m = small_market(2);
    RolloutConfig cfg;
    cfg.steps = 2;
    Simulator sim(m, cfg);
    auto nets = make_nets(2, HeadKind::Identity, 9);
    NetPolicy policy(nets.inv, nets.cons);
    for (std::uint32_t trial = 0; trial < 10; ++trial) {
        const auto in = make_batch(cfg, 2, 1, 42, trial);
        const double x0 = in.x0(0);
        const double lam = lambda_path(sim, policy, in)(0, 0);
        const double h = 1e-7 * x0;
        const double fd = (objective_at(sim, policy, in, x0 + h) - objective_at(sim, policy, in, x0 - h)) / (2 * h);
        EXPECT_LE(std::abs(lam - fd) / std::abs(fd), 1e-6) << trial;
    }
}

TEST(Costate, SecondOrderMatchesFiniteDifferenceSlope) {
    const auto m = small_market(2);
    RolloutConfig cfg;
    cfg.steps = 2;
    Simulator sim(m, cfg);
    auto nets = make_nets(2, HeadKind::Identity, 10);
    NetPolicy policy(nets.inv, nets.cons);
    const auto in = make_batch(cfg, 2, 8, 42, 3);
    CostateOptions second, fd;
    second.method = SlopeMethod::SecondOrder;
    fd.method = SlopeMethod::FiniteDifference;
    for (int k = 0; k < cfg.steps; ++k) {
        const auto batch = sim.simulate(policy, in);
        const auto a = node_costates(sim, policy, in, k, batch.x.col(k), second);
        const auto b = node_costates(sim, policy, in, k, batch.x.col(k), fd);
        for (Index i = 0; i < in.size(); ++i) {
            EXPECT_LE(std::abs(a.dlambda_dx(i) - b.dlambda_dx(i)) / std::abs(a.dlambda_dx(i)), 1e-4)
                << "k=" << k << " path=" << i;
        }
    }
}

TEST(Costate, OraclePolicyMatchesValueFunction) {
    const auto m = small_market(3);
    RolloutConfig cfg;
    cfg.steps = 50;
    Simulator sim(m, cfg);
    auto oracle = std::make_shared<ValueOracle>(value_ode_oracle(m, cfg.gamma, cfg.rho, cfg.kappa_bequest, 1.0));
    OraclePolicy policy(optimal_weights(m, cfg.gamma), oracle);
    std::vector<InitialNode> nodes(2000, InitialNode{0.2, 0.8});
    const auto in = batch_at(cfg, 3, nodes);
    const auto samples = extract_costates(sim, policy, in);
    double mean_lambda = 0.0;
    for (const auto& s : samples) {
        if (s.step == 0) mean_lambda += s.lambda / 2000.0;
        if (s.step < cfg.steps) {
            EXPECT_NEAR(s.x * s.dlambda_dx / s.lambda, -cfg.gamma, 0.03 * cfg.gamma);
        }
    }
    const double expected = oracle->costate(0.2, 0.8);
    EXPECT_NEAR(mean_lambda / expected, 1.0, 0.02);
}

TEST(Costate, StationarityIdentityAtOracleOptimum) {
    const auto m = small_market(4);
    RolloutConfig cfg;
    cfg.steps = 10;
    Simulator sim(m, cfg);
    auto oracle = std::make_shared<ValueOracle>(value_ode_oracle(m, cfg.gamma, cfg.rho, cfg.kappa_bequest, 1.0));
    const Vector pi = optimal_weights(m, cfg.gamma);
    OraclePolicy policy(pi, oracle);
    const auto samples = extract_costates(sim, policy, make_batch(cfg, 4, 20, 42, 0));
    for (const auto& s : samples) {
        if (s.step == cfg.steps) continue;
        const Vector lhs = m.sigma_cov.entries() * pi * (s.x * s.dlambda_dx);
        const Vector rhs = -s.lambda * m.excess_return();
        EXPECT_LE((lhs - rhs).norm(), 0.03 * rhs.norm());
        // Z is the diffusion loading of the costate.
        EXPECT_LE((s.z - s.dlambda_dx * s.x * m.chol.transpose() * pi).norm(), 1e-14 * s.z.norm() + 1e-300);
    }
}

TEST(ZProcess, Examples) {
    const auto m = make_market(0.03, 2.0, Vector::Constant(1, 0.07), Matrix::Constant(1, 1, 0.04));
    EXPECT_EQ(z_process(-3.0, 1.2, m, Vector::Zero(1))(0), 0.0);
    EXPECT_NEAR(z_process(-3.0, 1.2, m, Vector::Constant(1, 0.5))(0), -3.0 * 1.2 * 0.2 * 0.5, 1e-15);
}

TEST(Costate, PositiveUnderWealthProportionalPolicies) {
    // Random weights with consumption proportional to wealth keep J homogeneous
    // of degree 1 - gamma in X, so lambda carries the sign of the marginal utility.
    const auto m = small_market(2);
    RolloutConfig cfg;
    Simulator sim(m, cfg);
    Stream rng(17, StreamTag::Eval);
    for (std::uint32_t trial = 0; trial < 50; ++trial) {
        const Vector w{{rng.uniform(-1.0, 2.0), rng.uniform(-1.0, 2.0)}};
        FixedPolicy policy(w, false, rng.uniform(0.01, 2.0));
        const Matrix lam = lambda_path(sim, policy, make_batch(cfg, 2, 20, 42, trial));
        EXPECT_GT(lam.minCoeff(), 0.0) << trial;
    }
}

TEST(Costate, NetPoliciesCanHaveNegativeCostates) {
    // Consumption that falls with wealth can make J decreasing in X, so
    // positivity is not a property of arbitrary positive-head nets.
    const auto m = small_market(2);
    RolloutConfig cfg;
    cfg.kappa_bequest = 0.01;
    Simulator sim(m, cfg);
    FixedPolicy falling(Vector{{0.2, 0.1}}, false, -1.0, 1.5);
    std::vector<InitialNode> nodes(4, InitialNode{0.0, 1.0});
    const Matrix lam = lambda_path(sim, falling, batch_at(cfg, 2, nodes));
    EXPECT_LT(lam.col(0).maxCoeff(), 0.0);
}

TEST(Costate, LinearInBequestWeightWithoutConsumption) {
    const auto m = small_market(2);
    RolloutConfig cfg;
    cfg.gamma = 0.5;
    FixedPolicy policy(Vector{{0.2, 0.3}}, false, 0.0);
    const auto in = make_batch(cfg, 2, 16, 42, 0);
    const Matrix a = lambda_path(Simulator(m, cfg), policy, in);
    cfg.kappa_bequest *= 2.0;
    const Matrix b = lambda_path(Simulator(m, cfg), policy, in);
    EXPECT_LE(max_abs(b - 2.0 * a), 1e-14 * max_abs(b));
}

TEST(Costate, PathwiseLambdaUnbiasedAgainstFiniteDifference) {
    const auto m = small_market(2);
    RolloutConfig cfg;
    Simulator sim(m, cfg);
    FixedPolicy policy(Vector{{0.3, 0.2}}, false, 0.2);
    std::vector<InitialNode> nodes(10000, InitialNode{0.1, 1.0});
    const auto in = batch_at(cfg, 2, nodes);
    const Vector lam = lambda_path(sim, policy, in).col(0);
    const double h = 1e-5;
    BatchInputs up = in, down = in;
    up.x0.array() += h;
    down.x0.array() -= h;
    const Vector fd = (sim.simulate(policy, up).j - sim.simulate(policy, down).j) / (2 * h);
    const double mean = lam.mean();
    const double sd = std::sqrt((lam.array() - mean).square().sum() / (lam.size() - 1));
    EXPECT_LE(std::abs(mean - fd.mean()), 3.0 * sd / std::sqrt(10000.0));
}
