#include "pgdpo/evaluation.hpp"
#include "pgdpo/errors.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace pgdpo;
using pgdpo::testing::small_market;

TEST(RelativeMse, IdenticalControlsGiveZero) {
    Matrix pi(3, 2);
    pi << 0.2, 0.3, -0.1, 0.5, 0.4, 0.4;
    const Vector c = Vector::Constant(3, 0.7);
    const auto rep = relative_mse(pi, c, pi, c);
    EXPECT_EQ(rep.consumption, 0.0);
    EXPECT_EQ(rep.investment, 0.0);
    EXPECT_EQ(rep.asset_max, 0.0);
    EXPECT_EQ(rep.nodes, 3);
}

TEST(RelativeMse, DoubledControlsGiveOne) {
    Matrix ref(2, 2);
    ref << 0.2, 0.3, 0.1, 0.5;
    const Vector c_ref = Vector::LinSpaced(2, 0.3, 0.9);
    const auto rep = relative_mse(2.0 * ref, 2.0 * c_ref, ref, c_ref);
    EXPECT_NEAR(rep.consumption, 1.0, 1e-15);
    EXPECT_NEAR(rep.investment, 1.0, 1e-15);
}

TEST(RelativeMse, PerAssetBandBracketsTheAverage) {
    Matrix ref(2, 2);
    ref << 1.0, 1.0, 1.0, 1.0;
    Matrix pi = ref;
    pi.col(0).array() += 0.5;
    const auto rep = relative_mse(pi, Vector::Ones(2), ref, Vector::Ones(2));
    // Node error 0.25 / 2; asset 0 error 0.25 / 1, asset 1 error 0.
    EXPECT_NEAR(rep.investment, 0.125, 1e-15);
    EXPECT_NEAR(rep.asset_max, 0.25, 1e-15);
    EXPECT_NEAR(rep.asset_min, 0.0, 1e-15);
}

TEST(OneShot, OracleCostatesReproduceMerton) {
    const auto m = small_market(5, 7);
    RolloutConfig cfg;
    const auto ref = make_reference(m, cfg, false);
    const Vector merton = optimal_weights(m, cfg.gamma);
    for (double t : {0.0, 0.3, 0.9}) {
        for (double x : {0.2, 1.0, 1.7}) {
            const double lam = ref.oracle->costate(t, x);
            const double slope = ref.oracle->costate_slope(t, x);
            const auto os = oneshot_controls(t, x, lam, slope, m, false, cfg.gamma, cfg.rho);
            EXPECT_FALSE(os.slope_clamped);
            EXPECT_LT((os.pi - merton).norm(), 1e-10 * merton.norm());
            const double c = ref.consumption(t, x);
            EXPECT_NEAR(os.c, c, 1e-10 * c);
        }
    }
}

TEST(OneShot, ConstrainedOracleCostatesReproduceSimplexOptimum) {
    const auto m = small_market(4, 11);
    RolloutConfig cfg;
    const auto ref = make_reference(m, cfg, true);
    ASSERT_EQ(ref.weights.size(), 5);
    EXPECT_NEAR(ref.weights.sum(), 1.0, 1e-12);
    OneShotOptions opt;
    opt.schedule = {1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12};
    for (double x : {0.5, 1.5}) {
        const double t = 0.4;
        const auto os = oneshot_controls(t, x, ref.oracle->costate(t, x), ref.oracle->costate_slope(t, x), m, true,
                                         cfg.gamma, cfg.rho, opt);
        EXPECT_TRUE(os.converged);
        EXPECT_NEAR(os.pi.sum(), 1.0, 1e-12);
        // Inactive weights sit at eps over their multiplier, so the schedule runs far down.
        EXPECT_LT((os.pi - ref.weights).cwiseAbs().maxCoeff(), 1e-5);
        EXPECT_NEAR(os.c, ref.consumption(t, x), 1e-10 * os.c);
    }
}

TEST(OneShot, RejectsNonPositiveCostate) {
    const auto m = small_market(2);
    try {
        oneshot_controls(0.0, 1.0, -0.1, -0.2, m, false, 2.0, 0.1);
        FAIL() << "expected DomainError";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DomainError);
    }
}

TEST(OneShot, IncreasingCostateIsClamped) {
    const auto m = small_market(3);
    const auto os = oneshot_controls(0.1, 2.0, 0.5, 0.3, m, false, 2.0, 0.1);
    EXPECT_TRUE(os.slope_clamped);
    // The guard substitutes the CRRA slope -lambda gamma / X, giving the Merton weights.
    EXPECT_LT((os.pi - optimal_weights(m, 2.0)).norm(), 1e-12);
}

TEST(Foc, HandAssembledResidualsThreeAssets) {
    const auto m = small_market(3, 5);
    CostateSample s;
    s.t = 0.25;
    s.x = 1.3;
    s.lambda = 0.6;
    s.dlambda_dx = -0.9;
    s.pi = Vector(3);
    s.pi << 0.2, -0.1, 0.4;
    s.c = 0.8;
    const double gamma = 2.0, rho = 0.1;
    EXPECT_NEAR(consumption_foc_residual(s, gamma, rho), std::exp(-rho * 0.25) * std::pow(0.8, -2.0) - 0.6, 1e-14);
    const Matrix sigma = m.sigma_cov.entries();
    const Vector expected = 0.6 * 1.3 * m.excess_return() + (-0.9) * 1.3 * 1.3 * (sigma * s.pi);
    const Vector got = investment_foc_residual(s, m, false, 0.0, gamma);
    EXPECT_LT((got - expected).norm(), 1e-14);
}

TEST(Foc, OneShotControlsZeroTheResiduals) {
    const auto m = small_market(3, 5);
    const double gamma = 2.0, rho = 0.1;
    CostateSample s;
    s.t = 0.5;
    s.x = 0.8;
    s.lambda = 1.4;
    s.dlambda_dx = -3.0;
    const auto os = oneshot_controls(s.t, s.x, s.lambda, s.dlambda_dx, m, false, gamma, rho);
    s.pi = os.pi;
    s.c = os.c;
    EXPECT_NEAR(consumption_foc_residual(s, gamma, rho), 0.0, 1e-12);
    EXPECT_LT(investment_foc_residual(s, m, false, 0.0, gamma).norm(), 1e-12);

    const auto cs = oneshot_controls(s.t, s.x, s.lambda, s.dlambda_dx, m, true, gamma, rho);
    s.pi = cs.pi;
    EXPECT_LT(investment_foc_residual(s, m, true, 1e-6, gamma).norm(), 1e-9);
}

TEST(Evaluator, OracleNetsScoreNearZeroAgainstReference) {
    const auto m = small_market(3, 9);
    RolloutConfig cfg;
    EvalConfig ecfg;
    ecfg.paths = 32;
    Evaluator ev(m, cfg, false, ecfg);
    const auto policy = ev.reference().policy();
    Index skipped = 0;
    const auto nodes = ev.samples([&]() { return std::make_unique<OraclePolicy>(policy); }, &skipped);
    ASSERT_FALSE(nodes.empty());
    Matrix pi, pi_ref;
    Vector c, c_ref;
    ev.reference_at(nodes, pi_ref, c_ref);
    Index clamped = 0;
    ev.oneshot_at(nodes, pi, c, &clamped);
    const auto rep = relative_mse(pi, c, pi_ref, c_ref);
    // Pathwise costates of the optimal policy scatter around the oracle; OneShot
    // inherits that noise but no bias.
    EXPECT_LT(rep.investment, 0.05);
    EXPECT_LT(rep.consumption, 0.05);
}

TEST(Evaluator, ChunkedExtractionIndependentOfWorkers) {
    const auto m = small_market(2, 3);
    RolloutConfig cfg;
    Simulator sim(m, cfg);
    const auto ref = make_reference(m, cfg, false);
    const auto in = make_batch(cfg, 2, 20, 42, 0, StreamTag::Eval);
    const PolicyFactory f = [&]() { return std::make_unique<OraclePolicy>(ref.policy()); };
    const auto a = extract_costates_chunked(sim, f, in, {}, 7, 1);
    const auto b = extract_costates_chunked(sim, f, in, {}, 7, 3);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].lambda, b[i].lambda);
        EXPECT_EQ(a[i].dlambda_dx, b[i].dlambda_dx);
    }
}

TEST(Surrogate, FitReducesRegressionError) {
    NetShape is;
    is.head = HeadKind::Identity;
    is.assets = 2;
    is.hidden1 = is.hidden2 = 16;
    NetShape cs = is;
    cs.head = HeadKind::Positive;
    Surrogate s(is, cs, ConsumptionForm::WealthFraction, 5);
    const Index n = 400;
    const Vector t = Vector::LinSpaced(n, 0.0, 1.0);
    const Vector x = Vector::LinSpaced(n, 0.2, 2.0).reverse();
    Matrix pi(n, 2);
    pi.col(0) = (0.3 + 0.2 * t.array()).matrix();
    pi.col(1) = (-0.2 + 0.1 * x.array()).matrix();
    const Vector c = 0.5 * x;
    SurrogateConfig sc;
    sc.epochs = 1;
    sc.minibatch = 50;
    sc.lr = 1e-2;
    const double first = s.fit(t, x, pi, c, sc, 0);
    sc.epochs = 30;
    const double later = s.fit(t, x, pi, c, sc, 1);
    EXPECT_LT(later, first);
}

TEST(Foc, BoundaryWeightsUseKktViolation) {
    const auto m = small_market(3, 5);
    CostateSample s;
    s.t = 0.2;
    s.x = 1.0;
    s.lambda = 1.0;
    s.dlambda_dx = -2.0;
    RolloutConfig cfg;
    const Vector kkt = constrained_merton_weights(m, cfg.gamma);
    s.pi = kkt;
    const Vector r = investment_foc_residual(s, m, true, 0.0, cfg.gamma);
    // The enumerated optimum satisfies the KKT conditions, so without a barrier
    // term every component vanishes.
    EXPECT_LT(r.lpNorm<Eigen::Infinity>(), 1e-10);
}
