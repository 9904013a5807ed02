#include "commands.hpp"

#include "pgdpo/errors.hpp"
#include "pgdpo/evaluation.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace pgdpo::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
    std::ofstream os(path, std::ios::out | mode);
    if (!os) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    return os;
}

void write_text(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        auto os = open_out(tmp);
        os << text;
        if (!os) throw Error(ErrorCode::IoError, "failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream is(path);
    std::vector<std::string> lines;
    for (std::string line; std::getline(is, line);) lines.push_back(line);
    return lines;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

int leading_iteration(const std::string& row) {
    // Rows start with schema_version,iteration.
    const auto cells = split(row);
    return cells.size() > 1 ? std::stoi(cells[1]) : -1;
}

/// Keeps the header and every row up to `iteration`, so a resumed run appends
/// exactly the rows an uninterrupted run would have written.
void truncate_rows(const fs::path& path, const std::string& header, int iteration) {
    std::string text = header + "\n";
    if (fs::exists(path)) {
        const auto lines = read_lines(path);
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (!lines[i].empty() && leading_iteration(lines[i]) <= iteration) text += lines[i] + "\n";
        }
    }
    write_text(path, text);
}

const char* kTimingHeader = "schema_version,iteration,wall_clock_seconds";

void write_manifest(const fs::path& dir, const TrainArgs& args, const MarketParams& market, int start_iteration) {
    json j;
    j["schema_version"] = kCsvSchemaVersion;
    j["pgdpo_version"] = PGDPO_VERSION;
    j["written_utc"] = utc_now();
    j["start_iteration"] = start_iteration;
    j["market"] = {{"path", fs::absolute(args.market_path).string()}, {"hash", fnv1a_hex(market_to_json(market))}};
    j["config"] = json::parse(config_to_json(args.train, args.rollout));
    j["workers"] = args.train.workers;
    j["files"] = {"manifest.json", "metrics.csv", "timing.csv", "checkpoint.ckpt"};
    write_text(dir / "manifest.json", j.dump(2) + "\n");
}

void log_eval(const MetricRow& row) {
    const auto& e = *row.eval;
    spdlog::info("iter {}: J {:.5g}, investment rel-MSE {:.3e}, consumption rel-MSE {:.3e}", row.iteration,
                 row.j_hat, e.baseline.investment, e.baseline.consumption);
    if (e.has_oneshot) {
        spdlog::info("iter {}: OneShot investment rel-MSE {:.3e}, consumption rel-MSE {:.3e}, FOC-inv {:.3e} "
                     "(baseline {:.3e})",
                     row.iteration, e.oneshot.investment, e.oneshot.consumption, e.oneshot_foc.investment,
                     e.baseline_foc.investment);
    }
}

}  // namespace

int workers_from_env(int flag_value) {
    if (const char* env = std::getenv("PGDPO_WORKERS")) {
        int value = 0;
        const std::string s(env);
        const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size() || value < 1) {
            throw Error(ErrorCode::InvalidArgument, "PGDPO_WORKERS must be a positive integer");
        }
        return value;
    }
    return flag_value;
}

int cmd_generate(const GenerateArgs& args) {
    const MarketParams m = generate_market(args.market);
    if (const auto parent = fs::path(args.out).parent_path(); !parent.empty()) fs::create_directories(parent);
    save_market(m, args.out);
    spdlog::info("wrote {} (n = {}, seed {}, sum of base weights {:.4f})", args.out, m.n, m.seed, m.pi_base.sum());
    return kExitOk;
}

int cmd_train(TrainArgs args) {
    const MarketParams market = load_market(args.market_path);
    const fs::path dir(args.out_dir);
    fs::create_directories(dir);
    const fs::path ckpt = dir / "checkpoint.ckpt";
    const fs::path metrics = dir / "metrics.csv";
    const fs::path timing = dir / "timing.csv";

    const int workers = workers_from_env(args.train.workers);
    const bool resuming = args.resume && fs::exists(ckpt);
    if (resuming) {
        // The stored configuration wins so the continuation matches an uninterrupted
        // run; only the iteration budget may grow.
        const auto info = read_checkpoint_info(ckpt.string());
        const int iterations = args.train.iterations;
        config_from_json(info.config_json, args.train, args.rollout);
        args.train.iterations = std::max(iterations, info.iteration);
    }
    args.train.workers = workers;
    args.train.eval.workers = workers;
    args.train.validate();
    args.rollout.validate();

    Trainer trainer(market, args.rollout, args.train);
    if (resuming) {
        trainer.load_checkpoint(ckpt.string());
        spdlog::info("resuming from iteration {}", trainer.iteration());
    }
    write_manifest(dir, args, market, trainer.iteration());
    truncate_rows(metrics, metrics_header(), trainer.iteration());
    truncate_rows(timing, kTimingHeader, trainer.iteration());
    auto metrics_os = open_out(metrics, std::ios::app);
    auto timing_os = open_out(timing, std::ios::app);

    const auto& cfg = trainer.config();
    const auto start = std::chrono::steady_clock::now();
    try {
        while (trainer.iteration() < cfg.iterations) {
            MetricRow row = trainer.step();
            row.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            metrics_os << format_metrics_row(row, cfg.mode, cfg.constrained) << '\n';
            timing_os << kCsvSchemaVersion << ',' << row.iteration << ',' << num(row.wall_clock) << '\n';
            if (row.eval) {
                log_eval(row);
                metrics_os.flush();
                timing_os.flush();
            }
            if (cfg.checkpoint_every > 0 && row.iteration % cfg.checkpoint_every == 0) {
                metrics_os.flush();
                timing_os.flush();
                trainer.save_checkpoint(ckpt.string());
            }
        }
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteObjective) throw;
        metrics_os.flush();
        json dump;
        dump["error"] = e.what();
        dump["seed"] = cfg.seed;
        dump["iteration"] = trainer.iteration() + 1;
        dump["batch_stream"] = trainer.iteration();
        dump["batch"] = cfg.batch;
        dump["checkpoint"] = "nonfinite.ckpt";
        trainer.save_checkpoint((dir / "nonfinite.ckpt").string());
        write_text(dir / "nonfinite.json", dump.dump(2) + "\n");
        spdlog::error("{}; diagnostics in {}", e.what(), (dir / "nonfinite.json").string());
        return kExitNonFinite;
    }
    metrics_os.flush();
    timing_os.flush();
    trainer.save_checkpoint(ckpt.string());
    spdlog::info("finished {} iterations in {:.1f}s; outputs in {}", cfg.iterations,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), dir.string());
    return kExitOk;
}

namespace {

struct EvalSubject {
    EvalRecord record;
    int iteration = 0;
    bool constrained = false;
    RolloutConfig rollout;
    // Allocation as an (n + 1)-vector with the risk-free weight first.
    std::function<Vector(double, double)> allocation;
};

Vector with_riskfree(const Vector& w, bool explicit_rf) {
    if (explicit_rf) return w;
    Vector out(w.size() + 1);
    out(0) = 1.0 - w.sum();
    out.tail(w.size()) = w;
    return out;
}

void write_eval_outputs(const fs::path& dir, const EvalSubject& s, const std::vector<int>& assets) {
    const auto& e = s.record;
    const std::string it = std::to_string(s.iteration);
    const std::string sv = std::to_string(kCsvSchemaVersion);

    std::string mse = "schema_version,iteration,method,nodes,consumption_rel_mse,investment_rel_mse,"
                      "investment_mse_min,investment_mse_max\n";
    std::string foc = "schema_version,iteration,method,nodes,foc_consumption_mse,foc_investment_mse,"
                      "foc_consumption_mse_scaled,foc_investment_mse_scaled\n";
    std::string bands = "schema_version,iteration,method,min,max\n";
    const auto add = [&](const char* method, const MseReport& m, const FocReport& f) {
        const std::string head = sv + "," + it + "," + method + "," + std::to_string(e.nodes) + ",";
        mse += head + num(m.consumption) + "," + num(m.investment) + "," + num(m.asset_min) + "," +
               num(m.asset_max) + "\n";
        foc += head + num(f.consumption) + "," + num(f.investment) + "," + num(f.consumption_scaled) + "," +
               num(f.investment_scaled) + "\n";
        bands += sv + "," + it + "," + method + "," + num(m.asset_min) + "," + num(m.asset_max) + "\n";
    };
    add("pgdpo", e.baseline, e.baseline_foc);
    if (e.has_oneshot) add("oneshot", e.oneshot, e.oneshot_foc);
    write_text(dir / "eval_mse.csv", mse);
    write_text(dir / "eval_foc.csv", foc);
    write_text(dir / "bands.csv", bands);

    const Vector alloc = s.allocation(0.0, 1.0);
    std::string a = "schema_version,asset,weight\n";
    for (Index i = 0; i < alloc.size(); ++i) {
        a += sv + "," + (i == 0 ? std::string("riskfree") : std::to_string(i)) + "," + num(alloc(i)) + "\n";
    }
    write_text(dir / "alloc.csv", a);

    constexpr int kGrid = 101;
    const double x_lo = 0.1, x_hi = 2.0;
    std::vector<std::string> maps(assets.size(), "schema_version,t,X,pi\n");
    for (int i = 0; i < kGrid; ++i) {
        const double t = s.rollout.horizon * i / (kGrid - 1);
        for (int j = 0; j < kGrid; ++j) {
            const double x = x_lo + (x_hi - x_lo) * j / (kGrid - 1);
            const Vector w = s.allocation(t, x);
            for (std::size_t k = 0; k < assets.size(); ++k) {
                maps[k] += sv + "," + num(t) + "," + num(x) + "," + num(w(assets[k])) + "\n";
            }
        }
    }
    for (std::size_t k = 0; k < assets.size(); ++k) {
        write_text(dir / ("heatmap_" + std::to_string(assets[k]) + ".csv"), maps[k]);
    }
}

}  // namespace

int cmd_eval(const EvalArgs& args) {
    const MarketParams market = load_market(args.market_path);
    const int workers = workers_from_env(args.workers);
    std::vector<int> assets = args.assets;
    if (assets.empty()) {
        for (int a = 1; a <= std::min<Index>(market.n, 10); ++a) assets.push_back(a);
    }
    for (int a : assets) {
        if (a < 0 || a > market.n) throw Error(ErrorCode::InvalidArgument, "heatmap asset out of range");
    }
    const bool with_oneshot = args.mode == TrainMode::OneShot;
    EvalSubject subject;

    if (args.checkpoint == "oracle") {
        subject.rollout = args.rollout;
        subject.constrained = args.constrained;
        EvalConfig ecfg;
        ecfg.paths = args.nodes;
        ecfg.workers = workers;
        Evaluator ev(market, args.rollout, args.constrained, ecfg);
        const auto ref = ev.reference();
        subject.record = ev.evaluate([&]() { return std::make_unique<OraclePolicy>(ref.policy()); }, with_oneshot);
        subject.allocation = [ref](double, double) { return with_riskfree(ref.weights, ref.constrained); };
        fs::create_directories(args.out_dir);
        write_eval_outputs(args.out_dir, subject, assets);
        return kExitOk;
    }

    const auto info = read_checkpoint_info(args.checkpoint);
    if (info.assets != market.n) {
        throw Error(ErrorCode::CheckpointMismatch, "checkpoint has " + std::to_string(info.assets) +
                                                       " assets, market has " + std::to_string(market.n));
    }
    TrainConfig cfg;
    RolloutConfig rollout;
    config_from_json(info.config_json, cfg, rollout);
    cfg.eval.paths = args.nodes;
    cfg.workers = cfg.eval.workers = workers;
    Trainer trainer(market, rollout, cfg);
    trainer.load_checkpoint(args.checkpoint);
    subject.rollout = rollout;
    subject.constrained = cfg.constrained;
    subject.iteration = trainer.iteration();
    subject.record = trainer.evaluate(with_oneshot);
    const bool explicit_rf = cfg.constrained;
    subject.allocation = [&trainer, explicit_rf](double t, double x) {
        return with_riskfree(trainer.investment().forward(t, x).row(0).transpose(), explicit_rf);
    };
    fs::create_directories(args.out_dir);
    write_eval_outputs(args.out_dir, subject, assets);
    spdlog::info("evaluated iteration {} on {} nodes; outputs in {}", subject.iteration, subject.record.nodes,
                 args.out_dir);
    return kExitOk;
}

int cmd_export(const ExportArgs& args) {
    const fs::path run(args.run_dir);
    const fs::path out = args.out_dir.empty() ? run : fs::path(args.out_dir);
    const auto lines = read_lines(run / "metrics.csv");
    if (lines.empty()) throw Error(ErrorCode::IoError, "no metrics.csv in " + run.string());
    const auto header = split(lines.front());
    if (lines.front() != metrics_header()) {
        throw Error(ErrorCode::IoError, "metrics.csv has an unknown schema: " + (run / "metrics.csv").string());
    }
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;

    const std::string sv = std::to_string(kCsvSchemaVersion);
    std::string curve = "schema_version,iteration,method,consumption_rel_mse,investment_rel_mse,"
                        "foc_consumption_mse,foc_investment_mse\n";
    std::string utility = "schema_version,iteration,j_hat,utility_rolling_mean\n";
    std::string bands = "schema_version,iteration,method,min,max\n";
    for (std::size_t l = 1; l < lines.size(); ++l) {
        if (lines[l].empty()) continue;
        const auto c = split(lines[l]);
        if (c.size() != header.size()) throw Error(ErrorCode::IoError, "ragged metrics row " + std::to_string(l));
        const auto& it = c[col["iteration"]];
        utility += sv + "," + it + "," + c[col["j_hat"]] + "," + c[col["utility_rolling_mean"]] + "\n";
        if (!c[col["eval_nodes"]].empty()) {
            curve += sv + "," + it + ",pgdpo," + c[col["consumption_rel_mse"]] + "," +
                     c[col["investment_rel_mse"]] + "," + c[col["foc_consumption_mse"]] + "," +
                     c[col["foc_investment_mse"]] + "\n";
            bands += sv + "," + it + ",pgdpo," + c[col["investment_mse_min"]] + "," +
                     c[col["investment_mse_max"]] + "\n";
        }
        if (!c[col["os_investment_rel_mse"]].empty()) {
            curve += sv + "," + it + ",oneshot," + c[col["os_consumption_rel_mse"]] + "," +
                     c[col["os_investment_rel_mse"]] + "," + c[col["os_foc_consumption_mse"]] + "," +
                     c[col["os_foc_investment_mse"]] + "\n";
            bands += sv + "," + it + ",oneshot," + c[col["os_investment_mse_min"]] + "," +
                     c[col["os_investment_mse_max"]] + "\n";
        }
    }
    fs::create_directories(out);
    write_text(out / "mse_curve.csv", curve);
    write_text(out / "utility.csv", utility);
    write_text(out / "bands.csv", bands);
    spdlog::info("exported mse_curve.csv, utility.csv and bands.csv to {}", out.string());
    return kExitOk;
}

}  // namespace pgdpo::cli
