#pragma once

#include "pgdpo/market.hpp"

#include <optional>
#include <vector>

namespace pgdpo {

/// Pointwise investment problem over the simplex of n+1 weights (index 0 risk-free):
/// maximize lambda X pi.mu_tilde + 0.5 lambda_slope X^2 pi_r^T Sigma pi_r
/// with a log-barrier eps * sum ln pi_i and multiplier eta for sum pi = 1.
struct BarrierSystem {
    const MarketParams* market = nullptr;
    double epsilon = 1e-6;
    double lambda = 1.0;
    double lambda_slope = -2.0;
    double x = 1.0;
    double gamma = 2.0;  // only used by the concavity guard

    Index dim() const { return market->n + 1; }
};

struct BarrierSolution {
    Vector pi;
    double eta = 0.0;
    double residual_norm = 0.0;
    int iterations = 0;
    double epsilon_used = 0.0;
    bool converged = false;
    bool slope_clamped = false;
};

struct KktCertificate {
    Vector pi;
    double eta = 0.0;
    Vector zeta;
    std::vector<Index> active_set;
    double hamiltonian = 0.0;
};

struct NewtonOptions {
    double tol = 1e-10;
    int max_iter = 100;
};

/// dH/dpi_i for i = 0..n.
Vector hamiltonian_gradient(const BarrierSystem& sys, const Vector& pi);
double hamiltonian_value(const BarrierSystem& sys, const Vector& pi);

/// F_i = dH/dpi_i - eta + eps/pi_i (i = 0..n), F_sum = sum pi - 1.
Vector barrier_residual(const BarrierSystem& sys, const Vector& pi, double eta);
Matrix barrier_jacobian(const BarrierSystem& sys, const Vector& pi, double eta);

/// Least-squares multiplier for fixed pi: mean_i(dH/dpi_i + eps/pi_i).
double eliminate_eta(const BarrierSystem& sys, const Vector& pi);

/// Slope actually used by the solver; non-negative slopes are replaced by the
/// CRRA-implied -|lambda| gamma / X so that the problem stays concave.
double guarded_slope(const BarrierSystem& sys, bool* clamped = nullptr);

/// Damped Newton iteration keeping every weight strictly positive. Starts from
/// the uniform point unless `init` is given. Throws SingularJacobian if the
/// Newton matrix cannot be factorized.
BarrierSolution newton_solve(const BarrierSystem& sys, const std::optional<Vector>& init = std::nullopt,
                             const NewtonOptions& opt = {});

/// Solves for each epsilon of the schedule in turn, warm-starting from the
/// previous one. A singular Newton matrix is retried with a ten times larger
/// epsilon before giving up.
BarrierSolution solve_with_continuation(BarrierSystem sys, const std::vector<double>& schedule = {1e-2, 1e-4, 1e-6},
                                        const std::optional<Vector>& init = std::nullopt,
                                        const NewtonOptions& opt = {});

/// Exact maximizer over the simplex by enumerating active sets (n <= 12).
KktCertificate kkt_enumerate_oracle(const BarrierSystem& sys);

}  // namespace pgdpo
