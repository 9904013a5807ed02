#include "pgdpo/evaluation.hpp"

#include "pgdpo/errors.hpp"
#include "pgdpo/parallel.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace pgdpo {

Vector constrained_merton_weights(const MarketParams& m, double gamma) {
    BarrierSystem sys;
    sys.market = &m;
    sys.lambda = 1.0;
    sys.lambda_slope = -gamma;
    sys.x = 1.0;
    sys.gamma = gamma;
    if (m.n <= 12) return kkt_enumerate_oracle(sys).pi;
    // Drive the barrier far enough that its bias (eps over the smallest multiplier)
    // is negligible next to the errors being measured.
    const auto sol = solve_with_continuation(sys, {1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12});
    if (!sol.converged) spdlog::warn("constrained reference: barrier residual {:.3g}", sol.residual_norm);
    return sol.pi;
}

ReferenceControls make_reference(const MarketParams& m, const RolloutConfig& cfg, bool constrained, int grid_size) {
    ReferenceControls ref;
    ref.constrained = constrained;
    if (!constrained) {
        ref.weights = optimal_weights(m, cfg.gamma);
        ref.oracle = std::make_shared<const ValueOracle>(
            value_ode_oracle(m, cfg.gamma, cfg.rho, cfg.kappa_bequest, cfg.horizon, grid_size));
        return ref;
    }
    ref.weights = constrained_merton_weights(m, cfg.gamma);
    const Vector risky = ref.weights.tail(m.n);
    const double growth = ref.weights(0) * m.r + risky.dot(m.mu) -
                          0.5 * cfg.gamma * risky.dot(m.sigma_cov.entries() * risky);
    const double kappa = cfg.rho - (1.0 - cfg.gamma) * growth;
    ref.oracle = std::make_shared<const ValueOracle>(kappa, cfg.gamma, cfg.rho, cfg.kappa_bequest, cfg.horizon,
                                                     grid_size);
    return ref;
}

OneShotControl oneshot_controls(double t, double x, double lambda, double dlambda_dx, const MarketParams& m,
                                bool constrained, double gamma, double rho, const OneShotOptions& opt,
                                const std::optional<Vector>& warm_start) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        throw Error(ErrorCode::DomainError, "OneShot controls need a positive costate");
    }
    if (!(x > 0.0)) throw Error(ErrorCode::DomainError, "OneShot controls need X > 0");
    OneShotControl out;
    out.c = std::pow(std::exp(rho * t) * lambda, -1.0 / gamma);
    if (!constrained) {
        double slope = dlambda_dx;
        if (!(slope < 0.0)) {
            slope = -lambda * gamma / x;
            out.slope_clamped = true;
        }
        out.pi = (-lambda / (x * slope)) * solve_spd(m.sigma_cov, m.excess_return());
        return out;
    }
    BarrierSystem sys;
    sys.market = &m;
    sys.epsilon = opt.schedule.back();
    sys.lambda = lambda;
    sys.lambda_slope = dlambda_dx;
    sys.x = x;
    sys.gamma = gamma;
    const auto sol = solve_with_continuation(sys, opt.schedule, warm_start, opt.newton);
    out.pi = sol.pi;
    out.slope_clamped = sol.slope_clamped;
    out.converged = sol.converged;
    return out;
}

MseReport relative_mse(const Matrix& pi, const Vector& c, const Matrix& pi_ref, const Vector& c_ref) {
    if (pi.rows() != pi_ref.rows() || pi.cols() != pi_ref.cols() || c.size() != c_ref.size() ||
        c.size() != pi.rows()) {
        throw Error(ErrorCode::ShapeMismatch, "relative_mse: learned and reference shapes differ");
    }
    MseReport rep;
    rep.nodes = pi.rows();
    if (rep.nodes == 0) return rep;
    const double nodes = static_cast<double>(rep.nodes);
    const Vector ref_sq = pi_ref.rowwise().squaredNorm();
    const Vector err_sq = (pi - pi_ref).rowwise().squaredNorm();
    rep.investment = (err_sq.array() / ref_sq.array()).sum() / nodes;
    rep.consumption = ((c - c_ref).array().square() / c_ref.array().square()).sum() / nodes;

    const double scale = ref_sq.sum() / nodes / static_cast<double>(pi.cols());
    const RowVector per_asset = (pi - pi_ref).array().square().colwise().sum() / nodes / scale;
    rep.asset_min = per_asset.minCoeff();
    rep.asset_max = per_asset.maxCoeff();
    return rep;
}

double consumption_foc_residual(const CostateSample& s, double gamma, double rho) {
    return std::exp(-rho * s.t) * marginal_utility(s.c, gamma) - s.lambda;
}

Vector investment_foc_residual(const CostateSample& s, const MarketParams& m, bool constrained, double epsilon,
                               double gamma) {
    if (!constrained) {
        if (s.pi.size() != m.n) throw Error(ErrorCode::ShapeMismatch, "unconstrained residual needs n weights");
        return s.lambda * s.x * m.excess_return() +
               s.dlambda_dx * s.x * s.x * (m.sigma_cov.entries() * s.pi);
    }
    BarrierSystem sys;
    sys.market = &m;
    sys.epsilon = epsilon;
    sys.lambda = s.lambda;
    sys.lambda_slope = s.dlambda_dx;
    sys.x = s.x;
    sys.gamma = gamma;
    if ((s.pi.array() > 0.0).all()) {
        const double eta = eliminate_eta(sys, s.pi);
        return barrier_residual(sys, s.pi, eta).head(m.n + 1);
    }
    // Weights exactly on the boundary (the enumerated reference, or an underflowed
    // softmax) have no barrier term. Eliminate eta over the interior weights and
    // score boundary weights by their KKT violation max(0, dH/dpi_i - eta).
    if (s.pi.size() != m.n + 1 || (s.pi.array() < 0.0).any()) {
        throw Error(ErrorCode::DomainError, "constrained residual needs n + 1 non-negative weights");
    }
    const Vector g = hamiltonian_gradient(sys, s.pi);
    double eta = 0.0;
    Index interior = 0;
    for (Index i = 0; i < g.size(); ++i) {
        if (s.pi(i) > 0.0) {
            eta += g(i) + epsilon / s.pi(i);
            ++interior;
        }
    }
    eta /= static_cast<double>(std::max<Index>(interior, 1));
    Vector r(g.size());
    for (Index i = 0; i < g.size(); ++i) {
        r(i) = s.pi(i) > 0.0 ? g(i) + epsilon / s.pi(i) - eta : std::max(0.0, g(i) - eta);
    }
    return r;
}

FocReport foc_residuals(const std::vector<CostateSample>& samples, const MarketParams& m, bool constrained,
                        double epsilon, double gamma, double rho) {
    FocReport rep;
    for (const auto& s : samples) {
        if (s.pi.size() == 0) continue;
        const double rc = consumption_foc_residual(s, gamma, rho);
        const Vector rp = investment_foc_residual(s, m, constrained, epsilon, gamma);
        const double per_coord = rp.squaredNorm() / static_cast<double>(rp.size());
        const double l2 = s.lambda * s.lambda;
        rep.consumption += rc * rc;
        rep.investment += per_coord;
        rep.consumption_scaled += rc * rc / l2;
        rep.investment_scaled += per_coord / l2;
        ++rep.nodes;
    }
    if (rep.nodes > 0) {
        const double n = static_cast<double>(rep.nodes);
        rep.consumption /= n;
        rep.investment /= n;
        rep.consumption_scaled /= n;
        rep.investment_scaled /= n;
    }
    return rep;
}

std::vector<CostateSample> extract_costates_chunked(const Simulator& sim, const PolicyFactory& make_policy,
                                                    const BatchInputs& in, const CostateOptions& opt, Index chunk,
                                                    int workers) {
    const Index paths = in.size();
    const int m = in.steps();
    if (chunk < 1) chunk = paths;
    const Index chunks = (paths + chunk - 1) / chunk;
    std::vector<CostateSample> all(static_cast<std::size_t>(paths * (m + 1)));
    parallel_for(static_cast<std::size_t>(chunks), workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t c = begin; c < end; ++c) {
            const Index first = static_cast<Index>(c) * chunk;
            const Index count = std::min(chunk, paths - first);
            auto policy = make_policy();
            auto part = extract_costates(sim, *policy, slice(in, first, count), opt);
            for (auto& s : part) {
                s.path += first;
                all[static_cast<std::size_t>(s.path * (m + 1) + s.step)] = std::move(s);
            }
        }
    });
    return all;
}

Surrogate::Surrogate(const NetShape& investment, const NetShape& consumption, ConsumptionForm form,
                     std::uint64_t seed)
    : inv_(investment), cons_(consumption), form_(form), seed_(seed) {
    inv_.init_params(seed, 2);
    cons_.init_params(seed, 3);
}

namespace {

// One Adam descent step of the mean squared error of a net's output against targets.
// Simplex weights are compared in log space: the barrier conditions contain eps/pi_i,
// so a weight of 1e-7 against a target of 1e-5 matters as much as 0.1 against 10.
double regression_step(PolicyNet& net, AdamState& state, const AdamConfig& cfg, const Vector& t, const Vector& x,
                       const Matrix& target, bool scale_by_wealth) {
    Tape tape;
    const ParamNodes p = net.bind(tape);
    const NodeId xn = tape.constant(x);
    NodeId out = net.forward(tape, p, t, xn);
    if (scale_by_wealth) out = tape.mul(out, xn);
    NodeId diff;
    if (net.shape().head == HeadKind::Simplex) {
        const Matrix log_target = target.array().max(std::numeric_limits<double>::min()).log().matrix();
        diff = tape.sub(tape.log(out), tape.constant(log_target));
    } else {
        diff = tape.sub(out, tape.constant(target));
    }
    const NodeId loss = tape.mean_all(tape.mul(diff, diff));
    tape.backward(loss);
    Vector params = net.params();
    adam_step(params, net.gradient(tape, p), state, cfg, Direction::Descent);
    net.set_params(params);
    return tape.value(loss)(0, 0);
}

template <typename Rows>
Matrix gather(const Rows& src, const std::vector<Index>& idx, Index begin, Index count) {
    Matrix out(count, src.cols());
    for (Index r = 0; r < count; ++r) out.row(r) = src.row(idx[static_cast<std::size_t>(begin + r)]);
    return out;
}

}  // namespace

double Surrogate::fit(const Vector& t, const Vector& x, const Matrix& pi, const Vector& c, const SurrogateConfig& cfg,
                      std::uint32_t round) {
    const Index n = t.size();
    if (x.size() != n || pi.rows() != n || c.size() != n) {
        throw Error(ErrorCode::ShapeMismatch, "surrogate fit: sample arrays differ in length");
    }
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "surrogate fit needs samples");
    AdamConfig adam;
    adam.lr = cfg.lr;
    const bool scale = form_ == ConsumptionForm::WealthFraction && cons_.shape().head == HeadKind::Positive;
    const Index mb = std::max<Index>(1, std::min(cfg.minibatch, n));

    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Stream rng(seed_, StreamTag::Surrogate, round, static_cast<std::uint32_t>(epoch));
        for (Index i = n - 1; i > 0; --i) {
            const auto j = static_cast<Index>(rng.uniform() * static_cast<double>(i + 1));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(std::min(j, i))]);
        }
        for (Index begin = 0; begin < n; begin += mb) {
            const Index count = std::min(mb, n - begin);
            const Vector tb = gather(t, order, begin, count).col(0);
            const Vector xb = gather(x, order, begin, count).col(0);
            regression_step(inv_, inv_adam_, adam, tb, xb, gather(pi, order, begin, count), false);
            regression_step(cons_, cons_adam_, adam, tb, xb, gather(c, order, begin, count), scale);
        }
    }

    const Matrix fitted = inv_.forward(t, x);
    const double mse = (fitted - pi).array().square().mean();
    const RowVector mean = pi.colwise().mean();
    const double variance = (pi.rowwise() - mean).array().square().mean();
    return mse / std::max(variance, std::numeric_limits<double>::min());
}

Evaluator::Evaluator(const MarketParams& m, const RolloutConfig& rollout, bool constrained, EvalConfig cfg)
    : market_(m),
      rollout_(rollout),
      constrained_(constrained),
      cfg_(std::move(cfg)),
      sim_(m, rollout),
      reference_(make_reference(m, rollout, constrained)),
      batch_(make_batch(rollout, m.n, cfg_.paths, rollout.seed, cfg_.stream, StreamTag::Eval)) {}

std::vector<CostateSample> Evaluator::samples(const PolicyFactory& make_policy, Index* skipped) const {
    auto all = extract_costates_chunked(sim_, make_policy, batch_, cfg_.costate, cfg_.chunk, cfg_.workers);
    std::vector<CostateSample> kept;
    kept.reserve(all.size());
    Index dropped = 0;
    const int m = batch_.steps();
    for (auto& s : all) {
        if (s.step >= m) continue;
        if (rollout_.horizon - s.t < cfg_.tail_cutoff || !(s.lambda > 0.0)) {
            ++dropped;
            continue;
        }
        kept.push_back(std::move(s));
    }
    if (dropped > 0) spdlog::debug("evaluation: {} nodes excluded (tail cutoff or non-positive costate)", dropped);
    if (skipped) *skipped = dropped;
    return kept;
}

void Evaluator::reference_at(const std::vector<CostateSample>& samples, Matrix& pi, Vector& c) const {
    const auto rows = static_cast<Index>(samples.size());
    pi.resize(rows, reference_.weights.size());
    c.resize(rows);
    for (Index i = 0; i < rows; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        pi.row(i) = reference_.weights.transpose();
        c(i) = reference_.consumption(s.t, s.x);
    }
}

void Evaluator::oneshot_at(const std::vector<CostateSample>& samples, Matrix& pi, Vector& c, Index* clamped) const {
    const auto rows = static_cast<Index>(samples.size());
    const Index width = constrained_ ? market_.n + 1 : market_.n;
    pi.resize(rows, width);
    c.resize(rows);
    std::vector<char> flags(samples.size(), 0);
    // Consecutive samples of one path warm-start each other, so chunks follow path boundaries.
    std::vector<std::size_t> starts;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (i == 0 || samples[i].path != samples[i - 1].path) starts.push_back(i);
    }
    starts.push_back(samples.size());
    parallel_for(starts.size() - 1, cfg_.workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            std::optional<Vector> warm;
            for (std::size_t i = starts[p]; i < starts[p + 1]; ++i) {
                const auto& s = samples[i];
                const auto ctl = oneshot_controls(s.t, s.x, s.lambda, s.dlambda_dx, market_, constrained_,
                                                  rollout_.gamma, rollout_.rho, cfg_.oneshot, warm);
                pi.row(static_cast<Index>(i)) = ctl.pi.transpose();
                c(static_cast<Index>(i)) = ctl.c;
                flags[i] = ctl.slope_clamped ? 1 : 0;
                if (constrained_) warm = ctl.pi;
            }
        }
    });
    if (clamped) {
        *clamped = 0;
        for (char f : flags) *clamped += f;
    }
}

EvalRecord Evaluator::evaluate(const PolicyNet& inv, const PolicyNet& cons, ConsumptionForm form, bool with_oneshot,
                               Surrogate* surrogate, const SurrogateConfig& scfg, std::uint32_t round) const {
    const PolicyFactory nets = [&]() { return std::make_unique<NetPolicy>(inv, cons, form); };
    return evaluate(nets, with_oneshot, surrogate, scfg, round);
}

EvalRecord Evaluator::evaluate(const PolicyFactory& nets, bool with_oneshot, Surrogate* surrogate,
                               const SurrogateConfig& scfg, std::uint32_t round) const {
    EvalRecord rec;
    auto nodes = samples(nets, &rec.skipped);
    rec.nodes = static_cast<Index>(nodes.size());
    if (nodes.empty()) throw Error(ErrorCode::DomainError, "evaluation batch has no usable nodes");

    Matrix pi_ref, pi(rec.nodes, nodes.front().pi.size());
    Vector c_ref, c(rec.nodes);
    reference_at(nodes, pi_ref, c_ref);
    for (Index i = 0; i < rec.nodes; ++i) {
        pi.row(i) = nodes[static_cast<std::size_t>(i)].pi.transpose();
        c(i) = nodes[static_cast<std::size_t>(i)].c;
    }
    rec.baseline = relative_mse(pi, c, pi_ref, c_ref);
    rec.baseline_foc =
        foc_residuals(nodes, market_, constrained_, cfg_.foc_epsilon, rollout_.gamma, rollout_.rho);
    if (!with_oneshot) return rec;

    rec.has_oneshot = true;
    Matrix pi_os;
    Vector c_os;
    oneshot_at(nodes, pi_os, c_os, &rec.clamped);
    rec.oneshot = relative_mse(pi_os, c_os, pi_ref, c_ref);

    if (constrained_ && surrogate != nullptr) {
        // Fit on a separate batch, then roll the surrogate out on the evaluation batch
        // so its controls are scored against its own costates.
        const int m = rollout_.steps;
        const Index paths = std::max<Index>(1, (scfg.samples + m - 1) / m);
        const auto train_in = make_batch(rollout_, market_.n, paths, rollout_.seed, round, StreamTag::Surrogate);
        auto train_nodes = extract_costates_chunked(sim_, nets, train_in, cfg_.costate, cfg_.chunk, cfg_.workers);
        std::erase_if(train_nodes, [&](const CostateSample& s) { return s.step >= m || !(s.lambda > 0.0); });
        Matrix pi_fit;
        Vector c_fit;
        oneshot_at(train_nodes, pi_fit, c_fit, nullptr);
        Vector tt(static_cast<Index>(train_nodes.size())), xx(static_cast<Index>(train_nodes.size()));
        for (std::size_t i = 0; i < train_nodes.size(); ++i) {
            tt(static_cast<Index>(i)) = train_nodes[i].t;
            xx(static_cast<Index>(i)) = train_nodes[i].x;
        }
        rec.surrogate_fit = surrogate->fit(tt, xx, pi_fit, c_fit, scfg, round);

        const PolicyFactory sur = [&]() {
            return std::make_unique<NetPolicy>(surrogate->investment(), surrogate->consumption(), surrogate->form());
        };
        rec.oneshot_foc =
            foc_residuals(samples(sur), market_, constrained_, cfg_.foc_epsilon, rollout_.gamma, rollout_.rho);
        return rec;
    }

    for (Index i = 0; i < rec.nodes; ++i) {
        auto& s = nodes[static_cast<std::size_t>(i)];
        s.pi = pi_os.row(i).transpose();
        s.c = c_os(i);
    }
    rec.oneshot_foc = foc_residuals(nodes, market_, constrained_, cfg_.foc_epsilon, rollout_.gamma, rollout_.rho);
    return rec;
}

}  // namespace pgdpo
