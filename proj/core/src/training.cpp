#include "pgdpo/training.hpp"

#include "pgdpo/errors.hpp"
#include "pgdpo/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace pgdpo {

using nlohmann::json;

const char* to_string(TrainMode mode) noexcept { return mode == TrainMode::PgDpo ? "pgdpo" : "oneshot"; }

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "pgdpo") return TrainMode::PgDpo;
    if (s == "oneshot") return TrainMode::OneShot;
    throw Error(ErrorCode::InvalidArgument, "unknown mode '" + s + "' (expected pgdpo or oneshot)");
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
    if (iterations < 1) fail("iterations must be >= 1");
    if (batch < 1) fail("batch must be >= 1");
    if (!(adam.lr > 0.0) || !std::isfinite(adam.lr)) fail("learning rate must be positive");
    if (mode == TrainMode::OneShot && !(warmup < iterations)) fail("warmup must be below the iteration count");
    if (warmup < 0) fail("warmup must be >= 0");
    if (eval_every < 0 || checkpoint_every < 0) fail("intervals must be >= 0");
    if (utility_window < 1) fail("utility window must be >= 1");
    if (hidden < 1) fail("hidden width must be >= 1");
    if (eval.paths < 1) fail("evaluation needs at least one path");
    if (eval.oneshot.schedule.empty()) fail("empty barrier schedule");
    if (surrogate.samples < 1 || surrogate.epochs < 0 || surrogate.minibatch < 1 || !(surrogate.lr > 0.0)) {
        fail("invalid surrogate settings");
    }
}

bool TrainConfig::is_eval_iteration(int iteration) const {
    if (iteration == iterations) return true;
    if (eval_every > 0 && iteration % eval_every == 0) return true;
    return std::find(milestones.begin(), milestones.end(), iteration) != milestones.end();
}

std::string config_to_json(const TrainConfig& t, const RolloutConfig& r) {
    json j;
    j["rollout"] = {{"horizon", r.horizon}, {"steps", r.steps},   {"x_lo", r.x_lo},
                    {"x_hi", r.x_hi},       {"batch", r.batch},   {"rho", r.rho},
                    {"gamma", r.gamma},     {"kappa_bequest", r.kappa_bequest}, {"seed", r.seed}};
    j["train"] = {{"mode", to_string(t.mode)},
                  {"constrained", t.constrained},
                  {"iterations", t.iterations},
                  {"batch", t.batch},
                  {"lr", t.adam.lr},
                  {"beta1", t.adam.beta1},
                  {"beta2", t.adam.beta2},
                  {"adam_eps", t.adam.eps},
                  {"warmup", t.warmup},
                  {"eval_every", t.eval_every},
                  {"milestones", t.milestones},
                  {"checkpoint_every", t.checkpoint_every},
                  {"utility_window", t.utility_window},
                  {"hidden", t.hidden},
                  {"consumption_form", to_string(t.consumption_form)},
                  {"chunk", t.chunk},
                  {"seed", t.seed}};
    j["eval"] = {{"paths", t.eval.paths},
                 {"stream", t.eval.stream},
                 {"tail_cutoff", t.eval.tail_cutoff},
                 {"slope_method",
                  t.eval.costate.method == SlopeMethod::SecondOrder ? "second_order" : "finite_difference"},
                 {"rel_step", t.eval.costate.rel_step},
                 {"abs_step", t.eval.costate.abs_step},
                 {"barrier_schedule", t.eval.oneshot.schedule},
                 {"newton_tol", t.eval.oneshot.newton.tol},
                 {"newton_max_iter", t.eval.oneshot.newton.max_iter},
                 {"foc_epsilon", t.eval.foc_epsilon},
                 {"chunk", t.eval.chunk}};
    j["surrogate"] = {{"samples", t.surrogate.samples},
                      {"epochs", t.surrogate.epochs},
                      {"minibatch", t.surrogate.minibatch},
                      {"lr", t.surrogate.lr}};
    return j.dump(1);
}

void config_from_json(const std::string& text, TrainConfig& t, RolloutConfig& r) {
    try {
        const json j = json::parse(text);
        const auto& jr = j.at("rollout");
        r.horizon = jr.at("horizon");
        r.steps = jr.at("steps");
        r.x_lo = jr.at("x_lo");
        r.x_hi = jr.at("x_hi");
        r.batch = jr.at("batch");
        r.rho = jr.at("rho");
        r.gamma = jr.at("gamma");
        r.kappa_bequest = jr.at("kappa_bequest");
        r.seed = jr.at("seed");
        const auto& jt = j.at("train");
        t.mode = train_mode_from_string(jt.at("mode"));
        t.constrained = jt.at("constrained");
        t.iterations = jt.at("iterations");
        t.batch = jt.at("batch");
        t.adam.lr = jt.at("lr");
        t.adam.beta1 = jt.at("beta1");
        t.adam.beta2 = jt.at("beta2");
        t.adam.eps = jt.at("adam_eps");
        t.warmup = jt.at("warmup");
        t.eval_every = jt.at("eval_every");
        t.milestones = jt.at("milestones").get<std::vector<int>>();
        t.checkpoint_every = jt.at("checkpoint_every");
        t.utility_window = jt.at("utility_window");
        t.hidden = jt.at("hidden");
        t.consumption_form = consumption_form_from_string(jt.at("consumption_form"));
        t.chunk = jt.at("chunk");
        t.seed = jt.at("seed");
        const auto& je = j.at("eval");
        t.eval.paths = je.at("paths");
        t.eval.stream = je.at("stream");
        t.eval.tail_cutoff = je.at("tail_cutoff");
        t.eval.costate.method =
            je.at("slope_method") == "second_order" ? SlopeMethod::SecondOrder : SlopeMethod::FiniteDifference;
        t.eval.costate.rel_step = je.at("rel_step");
        t.eval.costate.abs_step = je.at("abs_step");
        t.eval.oneshot.schedule = je.at("barrier_schedule").get<std::vector<double>>();
        t.eval.oneshot.newton.tol = je.at("newton_tol");
        t.eval.oneshot.newton.max_iter = je.at("newton_max_iter");
        t.eval.foc_epsilon = je.at("foc_epsilon");
        t.eval.chunk = je.at("chunk");
        const auto& js = j.at("surrogate");
        t.surrogate.samples = js.at("samples");
        t.surrogate.epochs = js.at("epochs");
        t.surrogate.minibatch = js.at("minibatch");
        t.surrogate.lr = js.at("lr");
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, std::string("bad configuration JSON: ") + e.what());
    }
}

PolicyGradient autodiff_gradient(const Simulator& sim, const PolicyNet& inv, const PolicyNet& cons,
                                 ConsumptionForm form, const BatchInputs& in, Index chunk, int workers) {
    const Index paths = in.size();
    if (chunk < 1) chunk = paths;
    const auto chunks = static_cast<std::size_t>((paths + chunk - 1) / chunk);
    std::vector<Vector> theta(chunks), phi(chunks);
    std::vector<double> jsum(chunks, 0.0);
    parallel_for(chunks, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t c = begin; c < end; ++c) {
            const Index first = static_cast<Index>(c) * chunk;
            const Index count = std::min(chunk, paths - first);
            const BatchInputs part = slice(in, first, count);
            Tape tape;
            NetPolicy policy(inv, cons, form);
            const auto trace = sim.record(tape, policy, part);
            // Seeding every path with one gives sum_i dJ_i, i.e. B times the gradient of the mean.
            tape.backward(trace.j_paths, Matrix::Ones(count, 1));
            theta[c] = policy.investment_gradient(tape);
            phi[c] = policy.consumption_gradient(tape);
            jsum[c] = tape.value(trace.j_paths).sum();
        }
    });
    PolicyGradient g;
    g.theta = Vector::Zero(inv.param_count());
    g.phi = Vector::Zero(cons.param_count());
    double total = 0.0;
    for (std::size_t c = 0; c < chunks; ++c) {
        g.theta += theta[c];
        g.phi += phi[c];
        total += jsum[c];
    }
    const double b = static_cast<double>(paths);
    g.theta /= b;
    g.phi /= b;
    g.j_hat = total / b;
    return g;
}

PolicyGradient pontryagin_gradient(const Simulator& sim, const PolicyNet& inv, const PolicyNet& cons,
                                   ConsumptionForm form, const BatchInputs& in) {
    const MarketParams& mk = sim.market();
    const RolloutConfig& cfg = sim.config();
    const Index n = mk.n;
    const Index paths = in.size();
    const int m = in.steps();

    NetPolicy policy(inv, cons, form);
    const Matrix lambda = lambda_path(sim, policy, in);
    const RolloutBatch batch = sim.simulate(policy, in);
    const bool explicit_rf = policy.explicit_riskfree();
    const Vector excess = mk.excess_return();

    PolicyGradient g;
    g.theta = Vector::Zero(inv.param_count());
    g.phi = Vector::Zero(cons.param_count());
    g.j_hat = batch.j_mean;
    for (int k = 0; k < m; ++k) {
        const Vector xk = batch.x.col(k);
        const Vector lam_h = (lambda.col(k + 1).array() * batch.x.col(k + 1).array() / xk.array()).matrix();
        const Vector t = in.times(k);
        const Matrix& pi = batch.pi[static_cast<std::size_t>(k)];
        const Matrix& dw = in.dw[static_cast<std::size_t>(k)];

        Matrix v(paths, pi.cols());
        Matrix w(paths, 1);
        for (Index i = 0; i < paths; ++i) {
            const double dt = in.dt(i);
            const Vector risky = explicit_rf ? Vector(pi.row(i).tail(n).transpose()) : Vector(pi.row(i).transpose());
            const Vector z_h = lam_h(i) * (dw.row(i).transpose() / dt - mk.chol.transpose() * risky);
            const Vector diffusion = xk(i) * (mk.chol * z_h);
            if (explicit_rf) {
                v(i, 0) = lam_h(i) * xk(i) * mk.r * dt;
                v.row(i).tail(n) = ((lam_h(i) * xk(i) * mk.mu + diffusion) * dt).transpose();
            } else {
                v.row(i) = ((lam_h(i) * xk(i) * excess + diffusion) * dt).transpose();
            }
            const double c = batch.c(i, k);
            w(i, 0) = (std::exp(-cfg.rho * t(i)) * marginal_utility(c, cfg.gamma) - lam_h(i)) * dt;
        }

        // Pull the cotangents back through each network with wealth held fixed.
        Tape tape;
        NetPolicy vjp(inv, cons, form);
        vjp.attach(tape);
        const NodeId xn = tape.constant(xk);
        const NodeId pi_node = vjp.investment(tape, t, xn);
        tape.backward(pi_node, v);
        g.theta += vjp.investment_gradient(tape);
        const NodeId c_node = vjp.consumption(tape, t, xn);
        tape.backward(c_node, w);
        g.phi += vjp.consumption_gradient(tape);
    }
    g.theta /= static_cast<double>(paths);
    g.phi /= static_cast<double>(paths);
    return g;
}

namespace {

void append_number(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

void append_optional(std::string& out, bool present, double v) {
    out.push_back(',');
    if (present) append_number(out, v);
}

}  // namespace

std::string metrics_header() {
    return "schema_version,iteration,mode,constrained,j_hat,utility_rolling_mean,grad_norm_theta,grad_norm_phi,"
           "eval_nodes,consumption_rel_mse,investment_rel_mse,investment_mse_min,investment_mse_max,"
           "foc_consumption_mse,foc_investment_mse,foc_consumption_mse_scaled,foc_investment_mse_scaled,"
           "os_consumption_rel_mse,os_investment_rel_mse,os_investment_mse_min,os_investment_mse_max,"
           "os_foc_consumption_mse,os_foc_investment_mse,os_foc_consumption_mse_scaled,"
           "os_foc_investment_mse_scaled,surrogate_fit_mse,os_clamped_nodes";
}

std::string format_metrics_row(const MetricRow& row, TrainMode mode, bool constrained) {
    std::string out = std::to_string(kMetricsSchemaVersion) + "," + std::to_string(row.iteration) + "," +
                      to_string(mode) + "," + (constrained ? "1" : "0") + ",";
    append_number(out, row.j_hat);
    out.push_back(',');
    append_number(out, row.utility_rolling_mean);
    out.push_back(',');
    append_number(out, row.grad_norm_theta);
    out.push_back(',');
    append_number(out, row.grad_norm_phi);

    const bool ev = row.eval.has_value();
    const EvalRecord empty;
    const EvalRecord& e = ev ? *row.eval : empty;
    out.push_back(',');
    if (ev) out += std::to_string(e.nodes);
    append_optional(out, ev, e.baseline.consumption);
    append_optional(out, ev, e.baseline.investment);
    append_optional(out, ev, e.baseline.asset_min);
    append_optional(out, ev, e.baseline.asset_max);
    append_optional(out, ev, e.baseline_foc.consumption);
    append_optional(out, ev, e.baseline_foc.investment);
    append_optional(out, ev, e.baseline_foc.consumption_scaled);
    append_optional(out, ev, e.baseline_foc.investment_scaled);
    const bool os = ev && e.has_oneshot;
    append_optional(out, os, e.oneshot.consumption);
    append_optional(out, os, e.oneshot.investment);
    append_optional(out, os, e.oneshot.asset_min);
    append_optional(out, os, e.oneshot.asset_max);
    append_optional(out, os, e.oneshot_foc.consumption);
    append_optional(out, os, e.oneshot_foc.investment);
    append_optional(out, os, e.oneshot_foc.consumption_scaled);
    append_optional(out, os, e.oneshot_foc.investment_scaled);
    append_optional(out, os && e.surrogate_fit.has_value(), e.surrogate_fit.value_or(0.0));
    out.push_back(',');
    if (os) out += std::to_string(e.clamped);
    return out;
}

NetShape investment_shape(const TrainConfig& cfg, Index assets, double horizon) {
    NetShape s;
    s.head = cfg.constrained ? HeadKind::Simplex : HeadKind::Identity;
    s.assets = assets;
    s.hidden1 = s.hidden2 = cfg.hidden;
    s.horizon = horizon;
    return s;
}

NetShape consumption_shape(const TrainConfig& cfg, Index assets, double horizon) {
    NetShape s;
    s.head = HeadKind::Positive;
    s.assets = assets;
    s.hidden1 = s.hidden2 = cfg.hidden;
    s.horizon = horizon;
    return s;
}

Trainer::Trainer(const MarketParams& market, const RolloutConfig& rollout, const TrainConfig& cfg)
    : market_(market),
      rollout_(rollout),
      cfg_(cfg),
      sim_(market, rollout),
      inv_(investment_shape(cfg, market.n, rollout.horizon)),
      cons_(consumption_shape(cfg, market.n, rollout.horizon)) {
    cfg_.validate();
    rollout_.validate();
    inv_.init_params(cfg_.seed, 0);
    cons_.init_params(cfg_.seed, 1);
    inv_adam_.reset(inv_.param_count());
    cons_adam_.reset(cons_.param_count());
    if (cfg_.mode == TrainMode::OneShot && cfg_.constrained) {
        surrogate_.emplace(inv_.shape(), cons_.shape(), cfg_.consumption_form, cfg_.seed);
    }
}

const Evaluator& Trainer::evaluator() const {
    if (!evaluator_) evaluator_.emplace(market_, rollout_, cfg_.constrained, cfg_.eval);
    return *evaluator_;
}

EvalRecord Trainer::evaluate(bool with_oneshot) {
    return evaluator().evaluate(inv_, cons_, cfg_.consumption_form, with_oneshot,
                                surrogate_ ? &*surrogate_ : nullptr, cfg_.surrogate,
                                static_cast<std::uint32_t>(iteration_));
}

MetricRow Trainer::step() {
    const auto stream = static_cast<std::uint32_t>(iteration_);
    const BatchInputs in = make_batch(rollout_, market_.n, cfg_.batch, cfg_.seed, stream);
    const PolicyGradient g =
        autodiff_gradient(sim_, inv_, cons_, cfg_.consumption_form, in, cfg_.chunk, cfg_.workers);
    if (!std::isfinite(g.j_hat) || !g.theta.allFinite() || !g.phi.allFinite()) {
        throw Error(ErrorCode::NonFiniteObjective, "iteration " + std::to_string(iteration_ + 1) + " (seed " +
                                                       std::to_string(cfg_.seed) + ", batch stream " +
                                                       std::to_string(stream) + ")");
    }
    Vector p = inv_.params();
    adam_step(p, g.theta, inv_adam_, cfg_.adam, Direction::Ascent);
    inv_.set_params(p);
    p = cons_.params();
    adam_step(p, g.phi, cons_adam_, cfg_.adam, Direction::Ascent);
    cons_.set_params(p);
    ++iteration_;

    window_.push_back(g.j_hat);
    if (static_cast<int>(window_.size()) > cfg_.utility_window) window_.erase(window_.begin());

    MetricRow row;
    row.iteration = iteration_;
    row.j_hat = g.j_hat;
    row.utility_rolling_mean =
        std::accumulate(window_.begin(), window_.end(), 0.0) / static_cast<double>(window_.size());
    row.grad_norm_theta = g.theta.norm();
    row.grad_norm_phi = g.phi.norm();
    if (cfg_.is_eval_iteration(iteration_)) {
        row.eval = evaluate(cfg_.mode == TrainMode::OneShot && iteration_ >= cfg_.warmup);
    }
    return row;
}

namespace {

constexpr char kMagic[8] = {'P', 'G', 'D', 'P', 'O', 'C', 'K', 'P'};
constexpr int kCheckpointVersion = 1;

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw Error(ErrorCode::IoError, "truncated checkpoint");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_block(std::ostream& os, const Vector& v) {
    write_u64(os, static_cast<std::uint64_t>(v.size()));
    for (Index i = 0; i < v.size(); ++i) write_u64(os, std::bit_cast<std::uint64_t>(v(i)));
}

Vector read_block(std::istream& is, Index expected) {
    const auto size = static_cast<Index>(read_u64(is));
    if (expected >= 0 && size != expected) throw Error(ErrorCode::CheckpointMismatch, "parameter block size differs");
    Vector v(size);
    for (Index i = 0; i < size; ++i) v(i) = std::bit_cast<double>(read_u64(is));
    return v;
}

Vector to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

std::string market_hash(const MarketParams& m) { return fnv1a_hex(market_to_json(m)); }

json read_header(std::istream& is, const std::string& path) {
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw Error(ErrorCode::IoError, "not a checkpoint file: " + path);
    }
    const auto len = read_u64(is);
    std::string text(len, '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw Error(ErrorCode::IoError, "truncated header");
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, std::string("bad checkpoint header: ") + e.what());
    }
}

}  // namespace

void Trainer::save_checkpoint(const std::string& path) const {
    json h;
    h["version"] = kCheckpointVersion;
    h["n"] = market_.n;
    h["heads"] = {{"investment", to_string(inv_.shape().head)}, {"consumption", to_string(cons_.shape().head)}};
    h["hidden"] = cfg_.hidden;
    h["seed"] = cfg_.seed;
    h["T"] = rollout_.horizon;
    h["iteration"] = iteration_;
    h["market_hash"] = market_hash(market_);
    h["config"] = json::parse(config_to_json(cfg_, rollout_));
    h["adam_steps"] = {inv_adam_.step, cons_adam_.step};
    h["surrogate"] = surrogate_.has_value();
    if (surrogate_) {
        auto& s = const_cast<Surrogate&>(*surrogate_);
        h["surrogate_adam_steps"] = {s.investment_adam().step, s.consumption_adam().step};
    }
    const std::string header = h.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error(ErrorCode::IoError, "cannot write checkpoint " + tmp);
        os.write(kMagic, 8);
        write_u64(os, header.size());
        os.write(header.data(), static_cast<std::streamsize>(header.size()));
        write_block(os, inv_.params());
        write_block(os, cons_.params());
        write_block(os, inv_adam_.m);
        write_block(os, inv_adam_.v);
        write_block(os, cons_adam_.m);
        write_block(os, cons_adam_.v);
        write_block(os, to_vector(window_));
        if (surrogate_) {
            auto& s = const_cast<Surrogate&>(*surrogate_);
            write_block(os, s.investment().params());
            write_block(os, s.consumption().params());
            for (AdamState* a : {&s.investment_adam(), &s.consumption_adam()}) {
                write_block(os, a->m.size() ? a->m : Vector::Zero(0));
                write_block(os, a->v.size() ? a->v : Vector::Zero(0));
            }
        }
        if (!os) throw Error(ErrorCode::IoError, "failed writing checkpoint " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot move checkpoint into place: " + ec.message());
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::IoError, "cannot open checkpoint " + path);
    const json h = read_header(is, path);
    CheckpointInfo info;
    try {
        info.version = h.at("version");
        info.assets = h.at("n");
        info.iteration = h.at("iteration");
        info.market_hash = h.at("market_hash");
        info.investment_head = h.at("heads").at("investment");
        info.consumption_head = h.at("heads").at("consumption");
        info.config_json = h.at("config").dump(1);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, std::string("bad checkpoint header: ") + e.what());
    }
    return info;
}

void Trainer::load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::IoError, "cannot open checkpoint " + path);
    const json h = read_header(is, path);
    try {
        if (h.at("version") != kCheckpointVersion) {
            throw Error(ErrorCode::CheckpointMismatch, "unsupported checkpoint version");
        }
        if (h.at("n") != market_.n) throw Error(ErrorCode::CheckpointMismatch, "asset count differs from the market");
        if (h.at("market_hash") != market_hash(market_)) {
            throw Error(ErrorCode::CheckpointMismatch, "checkpoint was written for a different market");
        }
        if (h.at("heads").at("investment") != to_string(inv_.shape().head) ||
            h.at("heads").at("consumption") != to_string(cons_.shape().head) || h.at("hidden") != cfg_.hidden) {
            throw Error(ErrorCode::CheckpointMismatch, "network shapes differ from the checkpoint");
        }
        if (h.at("surrogate").get<bool>() != surrogate_.has_value()) {
            throw Error(ErrorCode::CheckpointMismatch, "surrogate presence differs from the configuration");
        }
        inv_.set_params(read_block(is, inv_.param_count()));
        cons_.set_params(read_block(is, cons_.param_count()));
        inv_adam_.m = read_block(is, inv_.param_count());
        inv_adam_.v = read_block(is, inv_.param_count());
        cons_adam_.m = read_block(is, cons_.param_count());
        cons_adam_.v = read_block(is, cons_.param_count());
        inv_adam_.step = h.at("adam_steps").at(0);
        cons_adam_.step = h.at("adam_steps").at(1);
        const Vector w = read_block(is, -1);
        window_.assign(w.data(), w.data() + w.size());
        if (surrogate_) {
            auto& s = *surrogate_;
            s.investment().set_params(read_block(is, s.investment().param_count()));
            s.consumption().set_params(read_block(is, s.consumption().param_count()));
            s.investment_adam().m = read_block(is, -1);
            s.investment_adam().v = read_block(is, -1);
            s.consumption_adam().m = read_block(is, -1);
            s.consumption_adam().v = read_block(is, -1);
            s.investment_adam().step = h.at("surrogate_adam_steps").at(0);
            s.consumption_adam().step = h.at("surrogate_adam_steps").at(1);
        }
        iteration_ = h.at("iteration");
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, std::string("bad checkpoint header: ") + e.what());
    }
}

namespace {

TrainResult run_training(const MarketParams& market, const RolloutConfig& rollout, const TrainConfig& cfg) {
    Trainer trainer(market, rollout, cfg);
    TrainResult result;
    while (trainer.iteration() < cfg.iterations) result.rows.push_back(trainer.step());
    result.investment = trainer.investment();
    result.consumption = trainer.consumption();
    return result;
}

}  // namespace

TrainResult train_pgdpo(const MarketParams& market, const RolloutConfig& rollout, TrainConfig cfg) {
    cfg.mode = TrainMode::PgDpo;
    return run_training(market, rollout, cfg);
}

TrainResult train_oneshot(const MarketParams& market, const RolloutConfig& rollout, TrainConfig cfg) {
    cfg.mode = TrainMode::OneShot;
    return run_training(market, rollout, cfg);
}

}  // namespace pgdpo
