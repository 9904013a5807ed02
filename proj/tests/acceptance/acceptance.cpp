// Acceptance checks. Each check prints one PASS/FAIL line with the measured value
// and the pinned tolerance; the exit status is non-zero if any selected check fails.
//
//   pgdpo_acceptance <check>... [--cli path/to/pgdpo] [--work dir]
//   pgdpo_acceptance all --cli build/tools/pgdpo

#include "pgdpo/barrier.hpp"
#include "pgdpo/costate.hpp"
#include "pgdpo/errors.hpp"
#include "pgdpo/evaluation.hpp"
#include "pgdpo/merton.hpp"
#include "pgdpo/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace pgdpo;
namespace fs = std::filesystem;

namespace {

struct Options {
    std::string cli;
    fs::path work = fs::temp_directory_path() / "pgdpo_acceptance";
};

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return buf;
}

double rel_err(const Vector& a, const Vector& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

NetShape shape(HeadKind head, Index n, Index width) {
    NetShape s;
    s.head = head;
    s.assets = n;
    s.hidden1 = s.hidden2 = width;
    return s;
}

MarketParams market(Index n, std::uint64_t seed) {
    MarketConfig cfg;
    cfg.n = n;
    cfg.seed = seed;
    return generate_market(cfg);
}

// Autodiff gradients against the costate-assembled ones on small random instances.
Outcome gradient_fidelity(const Options&) {
    Stream rng(7, StreamTag::PolicyInit, 1000);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = 1 + static_cast<Index>(rng.uniform() * 3.0);
        const auto m = market(n, 1000 + static_cast<std::uint64_t>(trial));
        RolloutConfig cfg;
        cfg.steps = 1 + static_cast<int>(rng.uniform() * 3.0);
        const Index paths = 1 + static_cast<Index>(rng.uniform() * 8.0);
        const HeadKind head = trial % 2 == 0 ? HeadKind::Identity : HeadKind::Simplex;
        PolicyNet inv(shape(head, n, 16));
        PolicyNet cons(shape(HeadKind::Positive, n, 16));
        inv.init_params(2000 + static_cast<std::uint64_t>(trial), 0);
        cons.init_params(2000 + static_cast<std::uint64_t>(trial), 1);
        Simulator sim(m, cfg);
        const auto in = make_batch(cfg, n, paths, 99, static_cast<std::uint32_t>(trial));
        const auto ad = autodiff_gradient(sim, inv, cons, ConsumptionForm::WealthFraction, in);
        const auto pg = pontryagin_gradient(sim, inv, cons, ConsumptionForm::WealthFraction, in);
        worst = std::max({worst, rel_err(pg.theta, ad.theta), rel_err(pg.phi, ad.phi)});
    }
    return {worst <= 1e-6, "max relative error " + fmt(worst) + " over 20 instances (tol 1e-6)"};
}

Outcome costate_correctness(const Options&) {
    // lambda_0 against central differences with common random numbers.
    double worst_fd = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Index n = 1 + trial % 5;
        const auto m = market(n, 3000 + static_cast<std::uint64_t>(trial));
        RolloutConfig cfg;
        Simulator sim(m, cfg);
        PolicyNet inv(shape(trial % 2 == 0 ? HeadKind::Identity : HeadKind::Simplex, n, 32));
        PolicyNet cons(shape(HeadKind::Positive, n, 32));
        inv.init_params(4000 + static_cast<std::uint64_t>(trial), 0);
        cons.init_params(4000 + static_cast<std::uint64_t>(trial), 1);
        NetPolicy policy(inv, cons);
        auto in = make_batch(cfg, n, 1, 5, static_cast<std::uint32_t>(trial));
        const double x0 = in.x0(0);
        const double lambda = lambda_path(sim, policy, in)(0, 0);
        // Central-difference step balancing truncation against rounding.
        const double h = std::cbrt(std::numeric_limits<double>::epsilon()) * x0;
        in.x0(0) = x0 + h;
        const double up = sim.simulate(policy, in).j(0);
        in.x0(0) = x0 - h;
        const double down = sim.simulate(policy, in).j(0);
        const double fd = (up - down) / (2.0 * h);
        worst_fd = std::max(worst_fd, std::abs(lambda - fd) / std::abs(fd));
    }

    // Under the optimal policy the costate is homogeneous of degree -gamma in wealth.
    const auto m = market(10, 42);
    RolloutConfig cfg;
    cfg.steps = 50;
    Simulator sim(m, cfg);
    auto oracle = std::make_shared<const ValueOracle>(
        value_ode_oracle(m, cfg.gamma, cfg.rho, cfg.kappa_bequest, cfg.horizon));
    OraclePolicy policy(optimal_weights(m, cfg.gamma), oracle);
    const auto samples = extract_costates(sim, policy, make_batch(cfg, m.n, 100, 42, 0, StreamTag::Eval));
    double worst_ratio = 0.0;
    for (const auto& s : samples) {
        worst_ratio = std::max(worst_ratio, std::abs(s.x * s.dlambda_dx / s.lambda + cfg.gamma) / cfg.gamma);
    }
    const bool pass = worst_fd <= 1e-6 && worst_ratio <= 0.03;
    return {pass, "lambda_0 vs FD max rel " + fmt(worst_fd) + " on 100 rollouts (tol 1e-6); X dlambda/lambda vs "
                      "-gamma max rel " + fmt(worst_ratio) + " at m=50 (tol 3e-2)"};
}

Outcome market_round_trip(const Options&) {
    double worst = 0.0;
    for (Index n : {1, 10, 100, 1000}) {
        const auto m = market(n, 42);
        worst = std::max(worst, (optimal_weights(m, m.gamma) - m.pi_base).cwiseAbs().maxCoeff());
    }
    return {worst <= 1e-8, "max |pi* - pi_base| " + fmt(worst) + " for n in {1,10,100,1000} (tol 1e-8)"};
}

Outcome closed_form_consistency(const Options&) {
    double worst_fraction = 0.0;
    for (Index n : {1, 10}) {
        const auto m = market(n, 42);
        const double gamma = 2.0, rho = 0.1;
        const double kappa = decay_rate_kappa(m, gamma, rho);
        const auto oracle = value_ode_oracle(m, gamma, rho, 1e-8, 1.0, 1000);
        for (int i = 0; i <= 900; ++i) {
            const double t = 0.001 * i;
            const double a = consumption_fraction(t, 1.0, kappa, gamma);
            worst_fraction = std::max(worst_fraction, std::abs(oracle.consumption_ratio(t) - a) / a);
        }
    }
    // gamma = 1 with unit bequest weight: g' = rho g - 1, g(T) = 1.
    const auto m = market(3, 42);
    const double rho = 0.1;
    const auto log_oracle = value_ode_oracle(m, 1.0, rho, 1.0, 1.0, 1000);
    double worst_log = 0.0;
    for (int i = 0; i <= 1000; ++i) {
        const double t = 0.001 * i;
        const double exact = (1.0 - 1.0 / rho) * std::exp(-rho * (1.0 - t)) + 1.0 / rho;
        worst_log = std::max(worst_log, std::abs(log_oracle.g(t) - exact));
    }
    const bool pass = worst_fraction <= 1e-3 && worst_log <= 1e-8;
    return {pass, "ODE vs closed-form fraction max rel " + fmt(worst_fraction) + " on [0, 0.9T] (tol 1e-3); "
                      "log-utility ODE max abs " + fmt(worst_log) + " (tol 1e-8)"};
}

Outcome barrier_solver(const Options&) {
    // Residual at convergence.
    double worst_f = 0.0;
    for (Index n : {2, 10, 100, 1000}) {
        const auto m = market(n, 50 + static_cast<std::uint64_t>(n));
        BarrierSystem sys;
        sys.market = &m;
        sys.lambda = 0.9;
        sys.lambda_slope = -1.8;
        const auto sol = solve_with_continuation(sys);
        const double f = barrier_residual(sys, sol.pi, sol.eta).lpNorm<Eigen::Infinity>();
        worst_f = std::max(worst_f, sol.converged ? f : std::numeric_limits<double>::infinity());
    }

    // Interior case: a drift back-solved from positive weights that sum below one.
    double worst_interior = 0.0, interior_finer = 0.0;
    for (Index n : {2, 5, 10}) {
        const Vector pi = Vector::Constant(n, 0.6 / static_cast<double>(n));
        const auto base = market(n, 70 + static_cast<std::uint64_t>(n));
        const Matrix sigma = base.sigma_cov.entries();
        const auto m = make_market(base.r, 2.0, back_solved_drift(base.r, 2.0, sigma, pi), sigma);
        BarrierSystem sys;
        sys.market = &m;
        sys.lambda = 1.0;
        sys.lambda_slope = -2.0;
        const auto sol = solve_with_continuation(sys);
        worst_interior = std::max(worst_interior, (sol.pi.tail(n) - pi).cwiseAbs().maxCoeff());
        // Shows the gap shrinking linearly in eps; not part of the verdict.
        const auto finer = solve_with_continuation(sys, {1e-2, 1e-4, 1e-6, 1e-8});
        interior_finer = std::max(interior_finer, (finer.pi.tail(n) - pi).cwiseAbs().maxCoeff());
    }

    // Active-set enumeration. The barrier bias is eps over the smallest multiplier,
    // so the continuation runs down to 1e-12 before comparing.
    double worst_kkt = 0.0;
    for (Index n = 2; n <= 8; ++n) {
        const auto m = market(n, 100 + static_cast<std::uint64_t>(n));
        BarrierSystem sys;
        sys.market = &m;
        sys.lambda = 0.9;
        sys.lambda_slope = -1.8;
        const auto cert = kkt_enumerate_oracle(sys);
        const auto sol = solve_with_continuation(sys, {1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12});
        worst_kkt = std::max(worst_kkt, (sol.pi - cert.pi).cwiseAbs().maxCoeff());
    }
    const bool pass = worst_f <= 1e-10 && worst_interior <= 1e-3 && worst_kkt <= 1e-5;
    return {pass, "max ||F||inf " + fmt(worst_f) + " for n in {2,10,100,1000} (tol 1e-10); interior gap " +
                      fmt(worst_interior) + " at eps 1e-6 (tol 1e-3), " + fmt(interior_finer) +
                      " at eps 1e-8; KKT gap " + fmt(worst_kkt) +
                      " for n<=8 (tol 1e-5)"};
}

Outcome oneshot_exactness(const Options&) {
    double worst_pi = 0.0, worst_c = 0.0;
    for (Index n : {1, 10, 100}) {
        const auto m = market(n, 42);
        RolloutConfig cfg;
        const auto ref = make_reference(m, cfg, false);
        for (double t : {0.0, 0.25, 0.5, 0.9}) {
            for (double x : {0.1, 0.7, 1.3, 2.0}) {
                const auto os = oneshot_controls(t, x, ref.oracle->costate(t, x), ref.oracle->costate_slope(t, x), m,
                                                 false, cfg.gamma, cfg.rho);
                worst_pi = std::max(worst_pi, rel_err(os.pi, ref.weights));
                const double c = ref.consumption(t, x);
                worst_c = std::max(worst_c, std::abs(os.c - c) / c);
            }
        }
    }
    const bool pass = worst_pi <= 1e-10 && worst_c <= 1e-10;
    return {pass, "weights max rel " + fmt(worst_pi) + ", consumption max rel " + fmt(worst_c) + " (tol 1e-10)"};
}

// Settings shared by both desk-scale runs.
TrainConfig desk_config(bool constrained) {
    TrainConfig cfg;
    cfg.mode = TrainMode::OneShot;
    cfg.constrained = constrained;
    cfg.iterations = 5000;
    cfg.batch = 256;
    cfg.adam.lr = 1e-3;
    cfg.warmup = 1000;
    cfg.eval_every = 0;
    cfg.milestones = {1000, 2500, 5000};
    cfg.checkpoint_every = 0;
    cfg.seed = 42;
    // The default surrogate budget costs about ten minutes per evaluation on one core.
    cfg.surrogate.samples = 20000;
    cfg.surrogate.epochs = 20;
    return cfg;
}

struct DeskRun {
    std::unique_ptr<Trainer> trainer;
    std::vector<MetricRow> rows;  // evaluated iterations only
};

// Trains to completion, echoing each evaluation as it happens.
DeskRun run_desk(const MarketParams& m, const TrainConfig& cfg) {
    DeskRun run;
    run.trainer = std::make_unique<Trainer>(m, RolloutConfig{}, cfg);
    const auto start = std::chrono::steady_clock::now();
    while (run.trainer->iteration() < cfg.iterations) {
        auto row = run.trainer->step();
        if (row.eval) {
            const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            std::printf("  iteration %d (%.0fs): baseline inv %s cons %s", row.iteration, s,
                        fmt(row.eval->baseline.investment).c_str(), fmt(row.eval->baseline.consumption).c_str());
            if (row.eval->has_oneshot) {
                std::printf(" | OneShot inv %s cons %s | FOC-inv baseline %s OneShot %s",
                            fmt(row.eval->oneshot.investment).c_str(), fmt(row.eval->oneshot.consumption).c_str(),
                            fmt(row.eval->baseline_foc.investment).c_str(),
                            fmt(row.eval->oneshot_foc.investment).c_str());
            }
            std::printf("\n");
            std::fflush(stdout);
            run.rows.push_back(std::move(row));
        }
    }
    return run;
}

Outcome desk_unconstrained(const Options&) {
    const auto m = market(10, 42);
    const auto rows = run_desk(m, desk_config(false)).rows;
    bool below = true;
    std::string trend;
    for (const auto& row : rows) {
        const auto& e = *row.eval;
        below = below && e.oneshot.investment < e.baseline.investment && e.oneshot.consumption < e.baseline.consumption;
        trend += " " + std::to_string(row.iteration) + ":" + fmt(e.oneshot.investment) + "<" +
                 fmt(e.baseline.investment);
    }
    const auto& last = *rows.back().eval;
    const bool pass = rows.size() == 3 && below && last.oneshot.investment <= 5e-2 && last.oneshot.consumption <= 1e-1;
    return {pass, "OneShot at 5000: investment " + fmt(last.oneshot.investment) + " (tol 5e-2), consumption " +
                      fmt(last.oneshot.consumption) + " (tol 1e-1); OneShot below baseline at every milestone: " +
                      (below ? "yes" : "no") + " (investment" + trend + ")"};
}

double simplex_violation(const Matrix& pi) {
    double worst = 0.0;
    for (Index i = 0; i < pi.rows(); ++i) {
        worst = std::max({worst, std::abs(pi.row(i).sum() - 1.0), std::max(0.0, -pi.row(i).minCoeff())});
    }
    return worst;
}

Outcome desk_constrained(const Options&) {
    const auto m = market(10, 42);
    const auto run = run_desk(m, desk_config(true));
    const auto& last = *run.rows.back().eval;
    const double ratio = last.baseline_foc.investment / last.oneshot_foc.investment;

    // Feasibility of every portfolio the run emits at the evaluation nodes: policy
    // net, OneShot barrier solutions and the surrogate net.
    const Trainer& trainer = *run.trainer;
    const auto& ev = trainer.evaluator();
    const auto& inv = trainer.investment();
    const auto& cons = trainer.consumption();
    const auto form = trainer.config().consumption_form;
    const auto nodes = ev.samples([&]() { return std::make_unique<NetPolicy>(inv, cons, form); });
    Vector t(static_cast<Index>(nodes.size())), x(static_cast<Index>(nodes.size()));
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        t(static_cast<Index>(i)) = nodes[i].t;
        x(static_cast<Index>(i)) = nodes[i].x;
    }
    Matrix pi_os;
    Vector c_os;
    ev.oneshot_at(nodes, pi_os, c_os, nullptr);
    const double violation = std::max({simplex_violation(inv.forward(t, x)), simplex_violation(pi_os),
                                       simplex_violation(trainer.surrogate()->investment().forward(t, x))});
    const bool pass = ratio >= 5.0 && violation <= 1e-8;
    return {pass, "FOC-investment MSE at 5000: baseline " + fmt(last.baseline_foc.investment) + ", OneShot " +
                      fmt(last.oneshot_foc.investment) + ", ratio " + fmt(ratio) + " (need >= 5); max simplex "
                      "violation " + fmt(violation) + " (tol 1e-8)"};
}

int run_command(const std::string& cmd) { return std::system(cmd.c_str()); }

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

Outcome determinism(const Options& opt) {
    if (opt.cli.empty()) return {false, "needs --cli path/to/pgdpo"};
    const fs::path dir = opt.work / "determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cli = "\"" + opt.cli + "\" --log-level warn ";
    const std::string mk = (dir / "market.json").string();
    if (run_command(cli + "generate --n 10 --seed 42 --out \"" + mk + "\"") != 0) return {false, "generate failed"};
    const std::string train = cli + "train --market \"" + mk + "\" --mode oneshot --constrained --iters 40 "
                                    "--batch 128 --warmup 10 --eval-every 20 --lr 1e-3 --surrogate-samples 2000 "
                                    "--surrogate-epochs 5 --workers 1 --seed 7 --out ";
    for (const char* run : {"a", "b"}) {
        if (run_command("PGDPO_WORKERS=1 " + train + "\"" + (dir / run).string() + "\"") != 0) {
            return {false, std::string("training run ") + run + " failed"};
        }
    }
    const std::string a = slurp(dir / "a" / "metrics.csv");
    const std::string b = slurp(dir / "b" / "metrics.csv");
    const bool populated = std::count(a.begin(), a.end(), '\n') == 41;
    const bool pass = populated && !a.empty() && a == b;
    return {pass, std::string("metrics.csv of two single-worker runs ") + (a == b ? "byte-identical" : "differ") +
                      " (" + std::to_string(a.size()) + " bytes, 40 rows " + (populated ? "present" : "missing") +
                      ")"};
}

const std::vector<std::pair<std::string, std::function<Outcome(const Options&)>>> kChecks{
    {"gradient_fidelity", gradient_fidelity},
    {"costate_correctness", costate_correctness},
    {"market_round_trip", market_round_trip},
    {"closed_form_consistency", closed_form_consistency},
    {"barrier_solver", barrier_solver},
    {"oneshot_exactness", oneshot_exactness},
    {"desk_unconstrained", desk_unconstrained},
    {"desk_constrained", desk_constrained},
    {"determinism", determinism},
};

}  // namespace

int main(int argc, char** argv) {
    Options opt;
    std::vector<std::string> selected;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--cli" && i + 1 < argc) {
            opt.cli = argv[++i];
        } else if (arg == "--work" && i + 1 < argc) {
            opt.work = argv[++i];
        } else if (arg == "all") {
            for (const auto& [name, fn] : kChecks) selected.push_back(name);
        } else {
            selected.push_back(arg);
        }
    }
    if (selected.empty()) {
        std::fprintf(stderr, "usage: %s <check>...|all [--cli path] [--work dir]\nchecks:", argv[0]);
        for (const auto& [name, fn] : kChecks) std::fprintf(stderr, " %s", name.c_str());
        std::fprintf(stderr, "\n");
        return 2;
    }

    int failures = 0;
    for (const auto& name : selected) {
        const auto it = std::find_if(kChecks.begin(), kChecks.end(), [&](const auto& c) { return c.first == name; });
        if (it == kChecks.end()) {
            std::printf("FAIL %s: unknown check\n", name.c_str());
            ++failures;
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = it->second(opt);
        } catch (const std::exception& e) {
            out = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %s: %s [%.1fs]\n", out.pass ? "PASS" : "FAIL", name.c_str(), out.detail.c_str(), secs);
        std::fflush(stdout);
        if (!out.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
