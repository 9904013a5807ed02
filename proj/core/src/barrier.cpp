#include "pgdpo/barrier.hpp"

#include "pgdpo/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace pgdpo {

namespace {

void check_system(const BarrierSystem& sys) {
    if (sys.market == nullptr) throw Error(ErrorCode::InvalidArgument, "barrier system without market");
    if (!(sys.x > 0.0)) throw Error(ErrorCode::DomainError, "barrier system needs X > 0");
}

void check_weights(const BarrierSystem& sys, const Vector& pi) {
    if (pi.size() != sys.dim()) throw Error(ErrorCode::ShapeMismatch, "weights must have n + 1 entries");
    if (!(pi.minCoeff() > 0.0)) throw Error(ErrorCode::DomainError, "barrier terms need strictly positive weights");
}

// Quadratic coefficient slope * X^2 applied to the risky block.
double curvature(const BarrierSystem& sys) { return guarded_slope(sys) * sys.x * sys.x; }

}  // namespace

double guarded_slope(const BarrierSystem& sys, bool* clamped) {
    if (sys.lambda_slope < 0.0) {
        if (clamped) *clamped = false;
        return sys.lambda_slope;
    }
    if (clamped) *clamped = true;
    return -std::abs(sys.lambda) * sys.gamma / sys.x;
}

Vector hamiltonian_gradient(const BarrierSystem& sys, const Vector& pi) {
    check_system(sys);
    const MarketParams& m = *sys.market;
    const Index n = m.n;
    if (pi.size() != n + 1) throw Error(ErrorCode::ShapeMismatch, "weights must have n + 1 entries");
    Vector g(n + 1);
    const double lx = sys.lambda * sys.x;
    g(0) = lx * m.r;
    g.tail(n) = lx * m.mu + curvature(sys) * (m.sigma_cov.entries() * pi.tail(n));
    return g;
}

double hamiltonian_value(const BarrierSystem& sys, const Vector& pi) {
    check_system(sys);
    const MarketParams& m = *sys.market;
    const Index n = m.n;
    const Vector risky = pi.tail(n);
    const double linear = sys.lambda * sys.x * (pi(0) * m.r + risky.dot(m.mu));
    return linear + 0.5 * curvature(sys) * risky.dot(m.sigma_cov.entries() * risky);
}

Vector barrier_residual(const BarrierSystem& sys, const Vector& pi, double eta) {
    check_system(sys);
    check_weights(sys, pi);
    const Index d = sys.dim();
    Vector f(d + 1);
    f.head(d) = (hamiltonian_gradient(sys, pi).array() - eta + sys.epsilon / pi.array()).matrix();
    f(d) = pi.sum() - 1.0;
    return f;
}

Matrix barrier_jacobian(const BarrierSystem& sys, const Vector& pi, double) {
    check_system(sys);
    check_weights(sys, pi);
    const Index n = sys.market->n;
    const Index d = n + 1;
    Matrix j = Matrix::Zero(d + 1, d + 1);
    j.block(1, 1, n, n) = curvature(sys) * sys.market->sigma_cov.entries();
    for (Index i = 0; i < d; ++i) j(i, i) -= sys.epsilon / (pi(i) * pi(i));
    j.block(0, d, d, 1).setConstant(-1.0);
    j.block(d, 0, 1, d).setConstant(1.0);
    return j;
}

double eliminate_eta(const BarrierSystem& sys, const Vector& pi) {
    check_weights(sys, pi);
    return (hamiltonian_gradient(sys, pi).array() + sys.epsilon / pi.array()).mean();
}

BarrierSolution newton_solve(const BarrierSystem& sys, const std::optional<Vector>& init, const NewtonOptions& opt) {
    check_system(sys);
    if (!(sys.epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
    const Index d = sys.dim();

    BarrierSolution sol;
    sol.epsilon_used = sys.epsilon;
    guarded_slope(sys, &sol.slope_clamped);
    sol.pi = init ? *init : Vector::Constant(d, 1.0 / static_cast<double>(d));
    check_weights(sys, sol.pi);
    sol.eta = eliminate_eta(sys, sol.pi);

    Vector f = barrier_residual(sys, sol.pi, sol.eta);
    double fnorm = f.norm();
    for (int it = 0;; ++it) {
        sol.residual_norm = f.lpNorm<Eigen::Infinity>();
        sol.iterations = it;
        if (sol.residual_norm <= opt.tol) {
            sol.converged = true;
            break;
        }
        if (it >= opt.max_iter) break;

        const auto step = solve_dense(barrier_jacobian(sys, sol.pi, sol.eta), -f);
        if (!step) throw Error(ErrorCode::SingularJacobian, "barrier Newton matrix is singular");
        const Vector dpi = step->head(d);
        const double deta = (*step)(d);

        // Fraction to the boundary keeps every weight strictly positive.
        double alpha = 1.0;
        for (Index i = 0; i < d; ++i) {
            if (dpi(i) < 0.0) alpha = std::min(alpha, 0.995 * sol.pi(i) / -dpi(i));
        }
        Vector pi_new;
        double eta_new = 0.0;
        Vector f_new;
        double fnew_norm = std::numeric_limits<double>::infinity();
        for (int bt = 0; bt < 60; ++bt) {
            pi_new = sol.pi + alpha * dpi;
            eta_new = sol.eta + alpha * deta;
            if (pi_new.minCoeff() > 0.0) {
                f_new = barrier_residual(sys, pi_new, eta_new);
                fnew_norm = f_new.norm();
                if (fnew_norm <= (1.0 - 1e-4 * alpha) * fnorm) break;
            }
            alpha *= 0.5;
        }
        if (!std::isfinite(fnew_norm)) break;
        sol.pi = pi_new;
        sol.eta = eta_new;
        f = f_new;
        fnorm = fnew_norm;
    }
    return sol;
}

BarrierSolution solve_with_continuation(BarrierSystem sys, const std::vector<double>& schedule,
                                        const std::optional<Vector>& init, const NewtonOptions& opt) {
    if (schedule.empty()) throw Error(ErrorCode::InvalidArgument, "empty epsilon schedule");
    std::optional<Vector> start = init;
    BarrierSolution sol;
    bool have = false;
    for (double eps : schedule) {
        sys.epsilon = eps;
        try {
            sol = newton_solve(sys, start, opt);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::SingularJacobian) throw;
            spdlog::warn("singular barrier Newton matrix at eps={}, retrying with eps={}", eps, 10.0 * eps);
            sys.epsilon = 10.0 * eps;
            try {
                sol = newton_solve(sys, start, opt);
            } catch (const Error& e2) {
                if (e2.code() != ErrorCode::SingularJacobian || !have) throw;
                spdlog::warn("barrier solve flagged: keeping the eps={} solution", sol.epsilon_used);
                return sol;
            }
        }
        have = true;
        start = sol.pi;
    }
    if (sol.slope_clamped) spdlog::debug("barrier: non-negative costate slope clamped to the CRRA slope");
    return sol;
}

KktCertificate kkt_enumerate_oracle(const BarrierSystem& sys) {
    check_system(sys);
    const Index n = sys.market->n;
    if (n > 12) throw Error(ErrorCode::InvalidArgument, "active-set enumeration limited to n <= 12");
    const Index d = n + 1;
    const double a = curvature(sys);
    Matrix q = Matrix::Zero(d, d);
    q.bottomRightCorner(n, n) = a * sys.market->sigma_cov.entries();
    Vector b(d);
    b(0) = sys.lambda * sys.x * sys.market->r;
    b.tail(n) = sys.lambda * sys.x * sys.market->mu;
    const double scale = 1.0 + b.cwiseAbs().maxCoeff() + q.cwiseAbs().maxCoeff();
    const double tol = 1e-9 * scale;

    KktCertificate best;
    bool found = false;
    const std::uint32_t subsets = 1u << d;
    for (std::uint32_t mask = 0; mask < subsets; ++mask) {
        // Bits set in mask are active (weight pinned at zero).
        std::vector<Index> free, active;
        for (Index i = 0; i < d; ++i) ((mask >> i) & 1u ? active : free).push_back(i);
        if (free.empty()) continue;
        const auto f = static_cast<Index>(free.size());
        Matrix k = Matrix::Zero(f + 1, f + 1);
        Vector rhs(f + 1);
        for (Index r = 0; r < f; ++r) {
            for (Index c = 0; c < f; ++c) k(r, c) = q(free[r], free[c]);
            k(r, f) = -1.0;
            k(f, r) = 1.0;
            rhs(r) = -b(free[r]);
        }
        rhs(f) = 1.0;
        const auto solved = solve_dense(k, rhs);
        if (!solved) continue;
        Vector pi = Vector::Zero(d);
        for (Index r = 0; r < f; ++r) pi(free[r]) = (*solved)(r);
        if (pi.minCoeff() < -1e-12) continue;
        pi = pi.cwiseMax(0.0);
        const double eta = (*solved)(f);
        const Vector grad = b + q * pi;
        Vector zeta = Vector::Zero(d);
        bool ok = true;
        for (Index i : active) {
            zeta(i) = eta - grad(i);
            if (zeta(i) < -tol) ok = false;
        }
        if (!ok) continue;
        const double h = b.dot(pi) + 0.5 * pi.dot(q * pi);
        if (!found || h > best.hamiltonian) {
            best.pi = pi;
            best.eta = eta;
            best.zeta = zeta.cwiseMax(0.0);
            best.active_set = active;
            best.hamiltonian = h;
            found = true;
        }
    }
    if (!found) {
        spdlog::error("KKT enumeration found no feasible certificate (lambda_slope={})", sys.lambda_slope);
        throw Error(ErrorCode::NoFeasibleCertificate, "no active set satisfies the KKT conditions");
    }
    return best;
}

}  // namespace pgdpo
