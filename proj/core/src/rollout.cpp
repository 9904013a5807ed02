#include "pgdpo/rollout.hpp"

#include "pgdpo/errors.hpp"

#include <cmath>

namespace pgdpo {

void RolloutConfig::validate() const {
    if (steps < 1) throw Error(ErrorCode::InvalidArgument, "steps must be >= 1");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw Error(ErrorCode::InvalidArgument, "horizon must be > 0");
    if (!(x_lo > 0.0 && x_hi >= x_lo) || !std::isfinite(x_hi)) {
        throw Error(ErrorCode::InvalidArgument, "wealth domain must lie in (0, inf)");
    }
    if (batch < 1) throw Error(ErrorCode::InvalidArgument, "batch must be >= 1");
    if (!std::isfinite(rho) || !(gamma > 0.0) || !std::isfinite(gamma) || !(kappa_bequest >= 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "rates must be finite, gamma > 0, kappa_bequest >= 0");
    }
}

double utility(double c, double gamma) {
    if (gamma == 1.0) return std::log(c);
    return std::pow(c, 1.0 - gamma) / (1.0 - gamma);
}

double marginal_utility(double c, double gamma) { return std::pow(c, -gamma); }

NodeId utility(Tape& tape, NodeId c, double gamma) {
    if (gamma == 1.0) return tape.log(c);
    return tape.scale(tape.pow(c, 1.0 - gamma), 1.0 / (1.0 - gamma));
}

std::vector<InitialNode> sample_initial_nodes(const RolloutConfig& cfg, Index count, std::uint64_t seed,
                                              std::uint32_t stream, StreamTag tag) {
    if (count < 1) throw Error(ErrorCode::InvalidArgument, "count must be >= 1");
    Stream rng(seed, tag, stream, 0);
    std::vector<InitialNode> nodes(static_cast<std::size_t>(count));
    for (auto& node : nodes) {
        node.t0 = rng.uniform(0.0, cfg.horizon);
        node.x0 = rng.uniform(cfg.x_lo, cfg.x_hi);
    }
    return nodes;
}

BatchInputs make_batch(const RolloutConfig& cfg, Index assets, const std::vector<InitialNode>& nodes,
                       std::uint64_t seed, std::uint32_t stream, StreamTag tag) {
    const auto batch = static_cast<Index>(nodes.size());
    BatchInputs in;
    in.t0.resize(batch);
    in.x0.resize(batch);
    in.dt.resize(batch);
    in.dw.assign(static_cast<std::size_t>(cfg.steps), Matrix(batch, assets));
    const StreamTag brownian = tag == StreamTag::Eval ? StreamTag::Eval : StreamTag::Brownian;
    for (Index i = 0; i < batch; ++i) {
        const auto& node = nodes[static_cast<std::size_t>(i)];
        in.t0(i) = node.t0;
        in.x0(i) = node.x0;
        in.dt(i) = (cfg.horizon - node.t0) / cfg.steps;
        const double sd = std::sqrt(in.dt(i));
        Stream rng(seed, brownian, stream, static_cast<std::uint32_t>(i + 1));
        for (int k = 0; k < cfg.steps; ++k) {
            for (Index j = 0; j < assets; ++j) in.dw[static_cast<std::size_t>(k)](i, j) = sd * rng.normal();
        }
    }
    return in;
}

BatchInputs make_batch(const RolloutConfig& cfg, Index assets, Index batch, std::uint64_t seed, std::uint32_t stream,
                       StreamTag tag) {
    return make_batch(cfg, assets, sample_initial_nodes(cfg, batch, seed, stream, tag), seed, stream, tag);
}

BatchInputs slice(const BatchInputs& in, Index first, Index count) {
    if (first < 0 || count < 0 || first + count > in.size()) {
        throw Error(ErrorCode::ShapeMismatch, "batch slice out of range");
    }
    BatchInputs out;
    out.t0 = in.t0.segment(first, count);
    out.x0 = in.x0.segment(first, count);
    out.dt = in.dt.segment(first, count);
    out.dw.reserve(in.dw.size());
    for (const auto& block : in.dw) out.dw.push_back(block.middleRows(first, count));
    return out;
}

const char* to_string(ConsumptionForm form) noexcept {
    return form == ConsumptionForm::WealthFraction ? "wealth_fraction" : "absolute";
}

ConsumptionForm consumption_form_from_string(const std::string& s) {
    if (s == "wealth_fraction") return ConsumptionForm::WealthFraction;
    if (s == "absolute") return ConsumptionForm::Absolute;
    throw Error(ErrorCode::InvalidArgument, "unknown consumption form '" + s + "'");
}

NetPolicy::NetPolicy(const PolicyNet& investment, const PolicyNet& consumption, ConsumptionForm form)
    : inv_(&investment),
      cons_(&consumption),
      scale_by_wealth_(form == ConsumptionForm::WealthFraction && consumption.shape().head == HeadKind::Positive) {
    const auto ih = investment.shape().head;
    const auto ch = consumption.shape().head;
    if (ih != HeadKind::Identity && ih != HeadKind::Simplex) {
        throw Error(ErrorCode::InvalidArgument, "investment net needs an identity or simplex head");
    }
    if (ch != HeadKind::Positive && ch != HeadKind::Bounded) {
        throw Error(ErrorCode::InvalidArgument, "consumption net needs a positive or bounded head");
    }
}

void NetPolicy::attach(Tape& tape) {
    inv_nodes_ = inv_->bind(tape);
    cons_nodes_ = cons_->bind(tape);
    attached_ = &tape;
}

NodeId NetPolicy::investment(Tape& tape, const Vector& t, NodeId x) {
    if (attached_ != &tape) throw Error(ErrorCode::InvalidArgument, "NetPolicy used on a tape it is not attached to");
    return inv_->forward(tape, inv_nodes_, t, x);
}

NodeId NetPolicy::consumption(Tape& tape, const Vector& t, NodeId x) {
    if (attached_ != &tape) throw Error(ErrorCode::InvalidArgument, "NetPolicy used on a tape it is not attached to");
    const NodeId out = cons_->forward(tape, cons_nodes_, t, x);
    return scale_by_wealth_ ? tape.mul(out, x) : out;
}

Matrix NetPolicy::investment(const Vector& t, const Vector& x) const { return inv_->forward(t, x); }

Vector NetPolicy::consumption(const Vector& t, const Vector& x) const {
    Vector c = cons_->forward(t, x).col(0);
    if (scale_by_wealth_) c.array() *= x.array();
    return c;
}

OraclePolicy::OraclePolicy(Vector weights, std::shared_ptr<const ValueOracle> oracle, bool explicit_rf)
    : weights_(std::move(weights)), oracle_(std::move(oracle)), explicit_(explicit_rf) {
    if (!oracle_) throw Error(ErrorCode::InvalidArgument, "oracle policy needs a value oracle");
    if (explicit_ && weights_.size() < 2) throw Error(ErrorCode::ShapeMismatch, "explicit weights need n + 1 entries");
}

NodeId OraclePolicy::investment(Tape& tape, const Vector& t, NodeId) {
    return tape.constant(weights_.transpose().replicate(t.size(), 1));
}

NodeId OraclePolicy::consumption(Tape& tape, const Vector& t, NodeId x) {
    auto ratio = std::make_shared<Matrix>(t.size(), 1);
    for (Index i = 0; i < t.size(); ++i) (*ratio)(i, 0) = oracle_->consumption_ratio(t(i));
    return tape.mul_const(x, std::move(ratio));
}

Matrix OraclePolicy::investment(const Vector& t, const Vector&) const {
    return weights_.transpose().replicate(t.size(), 1);
}

Vector OraclePolicy::consumption(const Vector& t, const Vector& x) const {
    Vector c(t.size());
    for (Index i = 0; i < t.size(); ++i) c(i) = oracle_->consumption_ratio(t(i)) * x(i);
    return c;
}

Simulator::Simulator(const MarketParams& market, const RolloutConfig& cfg) : market_(market), cfg_(cfg) {
    cfg_.validate();
    const Index n = market.n;
    excess_ = std::make_shared<const Matrix>(market.excess_return());
    sigma_ = std::make_shared<const Matrix>(market.sigma_cov.entries());
    chol_ = std::make_shared<const Matrix>(market.chol);
    Matrix mu_tilde(n + 1, 1);
    mu_tilde(0, 0) = market.r;
    mu_tilde.bottomRows(n) = market.mu;
    mu_tilde_ = std::make_shared<const Matrix>(std::move(mu_tilde));
    Matrix sigma_tilde = Matrix::Zero(n + 1, n + 1);
    sigma_tilde.bottomRightCorner(n, n) = market.sigma_cov.entries();
    sigma_tilde_ = std::make_shared<const Matrix>(std::move(sigma_tilde));
    Matrix chol_tilde = Matrix::Zero(n + 1, n);
    chol_tilde.bottomRows(n) = market.chol;
    chol_tilde_ = std::make_shared<const Matrix>(std::move(chol_tilde));
}

RolloutTrace Simulator::record(Tape& tape, ControlPolicy& policy, const BatchInputs& in) const {
    policy.attach(tape);
    return record(tape, policy, in, tape.variable(in.x0), 0);
}

RolloutTrace Simulator::record(Tape& tape, ControlPolicy& policy, const BatchInputs& in, NodeId x_start,
                               int first_step) const {
    const int m = in.steps();
    const Index batch = in.size();
    if (m != cfg_.steps) throw Error(ErrorCode::ShapeMismatch, "batch step count differs from config");
    if (first_step < 0 || first_step > m) throw Error(ErrorCode::InvalidArgument, "first_step out of range");
    if (policy.assets() != market_.n) throw Error(ErrorCode::ShapeMismatch, "policy and market asset counts differ");
    if (tape.value(x_start).rows() != batch || tape.value(x_start).cols() != 1) {
        throw Error(ErrorCode::ShapeMismatch, "wealth node must be B x 1");
    }
    const bool explicit_rf = policy.explicit_riskfree();
    const double gamma = cfg_.gamma;
    auto dt_col = std::make_shared<const Matrix>(in.dt);

    RolloutTrace trace;
    trace.first_step = first_step;
    trace.x.push_back(x_start);
    NodeId x = x_start;
    NodeId total{};
    bool have_total = false;

    for (int k = first_step; k < m; ++k) {
        const Vector t = in.times(k);
        const NodeId pi = policy.investment(tape, t, x);
        const NodeId c = policy.consumption(tape, t, x);
        if (gamma >= 1.0 && !(tape.value(c).minCoeff() > 0.0)) {
            throw Error(ErrorCode::UtilityOverflow, "non-positive consumption reached the utility");
        }
        trace.pi.push_back(pi);
        trace.c.push_back(c);

        NodeId drift, quad, loading;
        if (explicit_rf) {
            drift = tape.matmul_const(pi, mu_tilde_);
            quad = tape.row_dot(pi, tape.matmul_const(pi, sigma_tilde_));
            loading = tape.matmul_const(pi, chol_tilde_);
        } else {
            drift = tape.add_scalar(tape.matmul_const(pi, excess_), market_.r);
            quad = tape.row_dot(pi, tape.matmul_const(pi, sigma_));
            loading = tape.matmul_const(pi, chol_);
        }
        const NodeId diffusion = tape.row_dot(loading, tape.constant(in.dw[static_cast<std::size_t>(k)]));
        const NodeId c_over_x = tape.mul(c, tape.pow(x, -1.0));
        const NodeId rate = tape.sub(tape.sub(drift, tape.scale(quad, 0.5)), c_over_x);
        const NodeId exponent = tape.add(tape.mul_const(rate, dt_col), diffusion);
        x = tape.mul(x, tape.exp(exponent));
        trace.x.push_back(x);

        auto weight = std::make_shared<Matrix>(batch, 1);
        for (Index i = 0; i < batch; ++i) (*weight)(i, 0) = std::exp(-cfg_.rho * t(i)) * in.dt(i);
        const NodeId running = tape.mul_const(utility(tape, c, gamma), std::move(weight));
        total = have_total ? tape.add(total, running) : running;
        have_total = true;
    }

    const NodeId bequest =
        tape.scale(utility(tape, x, gamma), cfg_.kappa_bequest * std::exp(-cfg_.rho * cfg_.horizon));
    trace.j_paths = have_total ? tape.add(total, bequest) : bequest;
    trace.j_mean = tape.mean_all(trace.j_paths);
    return trace;
}

RolloutBatch Simulator::collect(const Tape& tape, const RolloutTrace& trace, const BatchInputs& in) const {
    const int m = in.steps();
    const Index batch = in.size();
    const double gamma = cfg_.gamma;
    RolloutBatch out;
    out.inputs = in;
    out.x = Matrix::Zero(batch, m + 1);
    out.c = Matrix::Zero(batch, m);
    out.running_utility = Matrix::Zero(batch, m);
    for (std::size_t j = 0; j < trace.x.size(); ++j) {
        out.x.col(trace.first_step + static_cast<Index>(j)) = tape.value(trace.x[j]).col(0);
    }
    for (std::size_t j = 0; j < trace.c.size(); ++j) {
        const int k = trace.first_step + static_cast<int>(j);
        out.pi.push_back(tape.value(trace.pi[j]));
        out.c.col(k) = tape.value(trace.c[j]).col(0);
        const Vector t = in.times(k);
        for (Index i = 0; i < batch; ++i) {
            out.running_utility(i, k) = std::exp(-cfg_.rho * t(i)) * utility(out.c(i, k), gamma) * in.dt(i);
        }
    }
    out.bequest_utility.resize(batch);
    for (Index i = 0; i < batch; ++i) {
        out.bequest_utility(i) =
            cfg_.kappa_bequest * std::exp(-cfg_.rho * cfg_.horizon) * utility(out.x(i, m), gamma);
    }
    out.j = tape.value(trace.j_paths).col(0);
    out.j_mean = tape.value(trace.j_mean)(0, 0);
    return out;
}

RolloutBatch Simulator::simulate(ControlPolicy& policy, const BatchInputs& in) const {
    Tape tape;
    const auto trace = record(tape, policy, in);
    return collect(tape, trace, in);
}

double Simulator::step_exponent(const Vector& pi, bool explicit_riskfree, double c, double x, double dt,
                                const Vector& dw) const {
    const Index n = market_.n;
    const Vector risky = explicit_riskfree ? Vector(pi.tail(n)) : pi;
    const double drift = explicit_riskfree ? pi.dot(mu_tilde_->col(0)) : market_.r + risky.dot(excess_->col(0));
    const double quad = risky.dot(market_.sigma_cov.entries() * risky);
    const double diffusion = (market_.chol.transpose() * risky).dot(dw);
    return (drift - 0.5 * quad - c / x) * dt + diffusion;
}

}  // namespace pgdpo
