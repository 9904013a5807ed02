#include "pgdpo/costate.hpp"

#include "pgdpo/errors.hpp"

#include <algorithm>
#include <cmath>

namespace pgdpo {

Matrix lambda_path(const Simulator& sim, ControlPolicy& policy, const BatchInputs& in) {
    Tape tape;
    const auto trace = sim.record(tape, policy, in);
    tape.backward(trace.j_paths, Matrix::Ones(in.size(), 1));
    Matrix lambda(in.size(), static_cast<Index>(trace.x.size()));
    for (std::size_t k = 0; k < trace.x.size(); ++k) lambda.col(static_cast<Index>(k)) = tape.adjoint(trace.x[k]);
    return lambda;
}

namespace {

Vector sub_lambda(const Simulator& sim, ControlPolicy& policy, const BatchInputs& in, int k, const Vector& xk) {
    Tape tape;
    policy.attach(tape);
    const NodeId leaf = tape.variable(xk);
    const auto trace = sim.record(tape, policy, in, leaf, k);
    tape.backward(trace.j_paths, Matrix::Ones(in.size(), 1));
    return tape.adjoint(leaf).col(0);
}

}  // namespace

NodeCostates node_costates(const Simulator& sim, ControlPolicy& policy, const BatchInputs& in, int k,
                           const Vector& xk, const CostateOptions& opt) {
    if (xk.size() != in.size()) throw Error(ErrorCode::ShapeMismatch, "node_costates: wealth vector size");
    NodeCostates out;
    if (opt.method == SlopeMethod::SecondOrder) {
        Tape tape(true);
        policy.attach(tape);
        const NodeId leaf = tape.variable(xk);
        tape.set_tangent(leaf, Matrix::Ones(in.size(), 1));
        const auto trace = sim.record(tape, policy, in, leaf, k);
        tape.backward(trace.j_paths, Matrix::Ones(in.size(), 1));
        out.lambda = tape.adjoint(leaf).col(0);
        out.dlambda_dx = tape.adjoint_tangent(leaf).col(0);
        return out;
    }

    out.lambda = sub_lambda(sim, policy, in, k, xk);
    const Vector h = (opt.rel_step * xk.array()).max(opt.abs_step).matrix();
    const Vector up = sub_lambda(sim, policy, in, k, xk + h);
    // Central difference unless the lower point would leave (0, inf); then one-sided.
    const bool central = ((xk - h).array() > 0.0).all();
    if (central) {
        const Vector down = sub_lambda(sim, policy, in, k, xk - h);
        out.dlambda_dx = ((up - down).array() / (2.0 * h.array())).matrix();
    } else {
        out.dlambda_dx = ((up - out.lambda).array() / h.array()).matrix();
    }
    return out;
}

Vector z_process(double dlambda_dx, double x, const MarketParams& m, const Vector& pi_risky) {
    if (pi_risky.size() != m.n) throw Error(ErrorCode::ShapeMismatch, "z_process: risky weight size");
    return dlambda_dx * x * (m.chol.transpose() * pi_risky);
}

std::vector<CostateSample> extract_costates(const Simulator& sim, ControlPolicy& policy, const BatchInputs& in,
                                            const CostateOptions& opt) {
    const RolloutBatch batch = sim.simulate(policy, in);
    const int m = in.steps();
    const Index paths = in.size();
    const Index n = sim.market().n;
    const bool explicit_rf = policy.explicit_riskfree();

    std::vector<CostateSample> samples(static_cast<std::size_t>(paths * (m + 1)));
    for (int k = 0; k <= m; ++k) {
        const Vector xk = batch.x.col(k);
        const NodeCostates nc = node_costates(sim, policy, in, k, xk, opt);
        const Vector t = in.times(k);
        for (Index i = 0; i < paths; ++i) {
            auto& s = samples[static_cast<std::size_t>(i * (m + 1) + k)];
            s.path = i;
            s.step = k;
            s.t = t(i);
            s.x = xk(i);
            s.lambda = nc.lambda(i);
            s.dlambda_dx = nc.dlambda_dx(i);
            if (k < m) {
                s.pi = batch.pi[static_cast<std::size_t>(k)].row(i).transpose();
                s.c = batch.c(i, k);
                const Vector risky = explicit_rf ? Vector(s.pi.tail(n)) : s.pi;
                s.z = z_process(s.dlambda_dx, s.x, sim.market(), risky);
            } else {
                s.z = Vector::Zero(n);
            }
        }
    }
    return samples;
}

}  // namespace pgdpo
