#include "commands.hpp"

#include "pgdpo/errors.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <iostream>
#include <map>

using namespace pgdpo;
using namespace pgdpo::cli;

namespace {

int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument:
        return kExitUsage;
    case ErrorCode::DegenerateMarket:
        return kExitDegenerateMarket;
    case ErrorCode::NonFiniteObjective:
        return kExitNonFinite;
    case ErrorCode::CheckpointMismatch:
        return kExitMismatch;
    default:
        return kExitFailure;
    }
}

const std::map<std::string, TrainMode> kModes{{"pgdpo", TrainMode::PgDpo}, {"oneshot", TrainMode::OneShot}};
const std::map<std::string, ConsumptionForm> kForms{{"wealth_fraction", ConsumptionForm::WealthFraction},
                                                    {"absolute", ConsumptionForm::Absolute}};
const std::map<std::string, SlopeMethod> kSlopes{{"second_order", SlopeMethod::SecondOrder},
                                                 {"finite_difference", SlopeMethod::FiniteDifference}};

void add_rollout_flags(CLI::App* cmd, RolloutConfig& r) {
    cmd->add_option("--horizon", r.horizon, "Horizon T")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--steps", r.steps, "Time steps per horizon")->check(CLI::Range(1, 100000))->capture_default_str();
    cmd->add_option("--rho", r.rho, "Discount rate")->capture_default_str();
    cmd->add_option("--kappa-bequest", r.kappa_bequest, "Bequest weight")->capture_default_str();
    cmd->add_option("--x-lo", r.x_lo, "Lower end of initial wealth draws")->capture_default_str();
    cmd->add_option("--x-hi", r.x_hi, "Upper end of initial wealth draws")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pontryagin-guided policy optimisation for multi-asset consumption and investment"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML file with option values (flags take precedence)");
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Draw a random market and write it as JSON");
    g->add_option("--n", gen.market.n, "Number of risky assets")->check(CLI::Range(1, 100000))->capture_default_str();
    g->add_option("--seed", gen.market.seed, "Market seed")->capture_default_str();
    g->add_option("--out", gen.out, "Output file")->capture_default_str();
    g->add_option("--r", gen.market.r, "Risk-free rate")->capture_default_str();
    g->add_option("--gamma", gen.market.gamma, "Relative risk aversion")->capture_default_str();
    g->add_option("--vol-lo", gen.market.vol_lo, "Smallest volatility")->capture_default_str();
    g->add_option("--vol-hi", gen.market.vol_hi, "Largest volatility")->capture_default_str();
    g->add_option("--pi-lo", gen.market.pi_lo, "Lower end of base weight draws")->capture_default_str();
    g->add_option("--pi-hi", gen.market.pi_hi, "Upper end of base weight draws")->capture_default_str();
    g->add_option("--sum-lo", gen.market.sum_lo, "Lower end of the risky total")->capture_default_str();
    g->add_option("--sum-hi", gen.market.sum_hi, "Upper end of the risky total")->capture_default_str();

    TrainArgs tr;
    double lr = tr.train.adam.lr;
    auto* t = app.add_subcommand("train", "Train policy networks; resumable from the run directory");
    t->add_option("--market", tr.market_path, "Market JSON")->required()->check(CLI::ExistingFile);
    t->add_option("--mode", tr.train.mode, "pgdpo or oneshot")
        ->transform(CLI::CheckedTransformer(kModes, CLI::ignore_case));
    t->add_flag("--constrained", tr.train.constrained, "No short sales, no borrowing (simplex weights)");
    t->add_option("--iters", tr.train.iterations, "Iterations")->check(CLI::PositiveNumber)->capture_default_str();
    t->add_option("--warmup", tr.train.warmup, "Iterations before OneShot scoring")->capture_default_str();
    t->add_option("--lr", lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    t->add_option("--seed", tr.train.seed, "Training seed (initialisation, batches, evaluation)")
        ->capture_default_str();
    t->add_option("--out", tr.out_dir, "Run directory")->capture_default_str();
    t->add_option("--batch", tr.train.batch, "Paths per iteration")->check(CLI::PositiveNumber)->capture_default_str();
    t->add_option("--eval-every", tr.train.eval_every, "Evaluation interval (0 disables)")->capture_default_str();
    t->add_option("--milestones", tr.train.milestones, "Extra evaluation iterations")->delimiter(',');
    t->add_option("--checkpoint-every", tr.train.checkpoint_every, "Checkpoint interval")->capture_default_str();
    t->add_option("--utility-window", tr.train.utility_window, "Rolling window of the utility estimate")
        ->capture_default_str();
    t->add_option("--hidden", tr.train.hidden, "Hidden width")->check(CLI::PositiveNumber)->capture_default_str();
    t->add_option("--consumption-form", tr.train.consumption_form, "wealth_fraction or absolute")
        ->transform(CLI::CheckedTransformer(kForms, CLI::ignore_case));
    t->add_option("--chunk", tr.train.chunk, "Paths per gradient chunk")->capture_default_str();
    t->add_option("--workers", tr.train.workers, "Worker threads (PGDPO_WORKERS overrides)")->capture_default_str();
    t->add_option("--eval-paths", tr.train.eval.paths, "Paths in the evaluation batch")->capture_default_str();
    t->add_option("--tail-cutoff", tr.train.eval.tail_cutoff, "Skip nodes with T - t below this")
        ->capture_default_str();
    t->add_option("--foc-epsilon", tr.train.eval.foc_epsilon, "Barrier weight in the FOC residual")
        ->capture_default_str();
    t->add_option("--slope-method", tr.train.eval.costate.method, "second_order or finite_difference")
        ->transform(CLI::CheckedTransformer(kSlopes, CLI::ignore_case));
    t->add_option("--surrogate-samples", tr.train.surrogate.samples, "Surrogate training nodes")
        ->capture_default_str();
    t->add_option("--surrogate-epochs", tr.train.surrogate.epochs, "Surrogate epochs")->capture_default_str();
    t->add_option("--surrogate-minibatch", tr.train.surrogate.minibatch, "Surrogate minibatch")
        ->capture_default_str();
    t->add_option("--surrogate-lr", tr.train.surrogate.lr, "Surrogate learning rate")->capture_default_str();
    t->add_option("--gamma", tr.rollout.gamma, "Relative risk aversion of the objective")->capture_default_str();
    add_rollout_flags(t, tr.rollout);
    t->add_flag("--resume", tr.resume, "Continue from the run directory's checkpoint if present");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Score a checkpoint (or the reference controls) and write CSVs");
    e->add_option("--market", ev.market_path, "Market JSON")->required()->check(CLI::ExistingFile);
    e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file, or 'oracle'")->required();
    e->add_option("--mode", ev.mode, "pgdpo or oneshot")->transform(CLI::CheckedTransformer(kModes, CLI::ignore_case));
    e->add_option("--nodes", ev.nodes, "Initial nodes (paths) in the evaluation batch")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    e->add_option("--assets", ev.assets, "Heatmap assets, 0 = risk-free (default: the first ten risky assets)")
        ->delimiter(',');
    e->add_option("--out", ev.out_dir, "Output directory")->capture_default_str();
    e->add_option("--workers", ev.workers, "Worker threads (PGDPO_WORKERS overrides)")->capture_default_str();
    e->add_flag("--constrained", ev.constrained, "Simplex reference (oracle only)");
    e->add_option("--gamma", ev.rollout.gamma, "Relative risk aversion (oracle only)")->capture_default_str();
    add_rollout_flags(e, ev.rollout);

    ExportArgs ex;
    auto* x = app.add_subcommand("export", "Write plotting CSVs from a run's metrics.csv");
    x->add_option("--run", ex.run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
    x->add_option("--out", ex.out_dir, "Output directory (default: the run directory)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        spdlog::set_level(spdlog::level::from_str(log_level));
        if (g->parsed()) return cmd_generate(gen);
        if (t->parsed()) {
            tr.train.adam.lr = lr;
            return cmd_train(tr);
        }
        if (e->parsed()) return cmd_eval(ev);
        return cmd_export(ex);
    } catch (const Error& err) {
        spdlog::error("{}", err.what());
        return exit_code_for(err.code());
    } catch (const std::exception& err) {
        spdlog::error("{}", err.what());
        return kExitFailure;
    }
}
