#pragma once

#include "pgdpo/rollout.hpp"

#include <vector>

namespace pgdpo {

enum class SlopeMethod {
    SecondOrder,       // forward-over-reverse on the tape
    FiniteDifference,  // central difference of lambda with common random numbers
};

// Leaky-ReLU nets make lambda jump where a path crosses an activation kink, and a
// central difference straddling a jump is far off; the taped derivative is not affected.
struct CostateOptions {
    SlopeMethod method = SlopeMethod::SecondOrder;
    double rel_step = 1e-4;
    double abs_step = 1e-6;
};

/// Costates at one visited node of one path.
struct CostateSample {
    Index path = 0;
    int step = 0;
    double t = 0.0;
    double x = 0.0;
    double lambda = 0.0;
    double dlambda_dx = 0.0;
    Vector z;   // n
    Vector pi;  // control applied at the node (empty at the terminal node)
    double c = 0.0;
};

/// Costates of every path at every step k = 0..m, from one reverse sweep of the
/// per-path objectives over the full rollout. Returns B x (m+1).
Matrix lambda_path(const Simulator& sim, ControlPolicy& policy, const BatchInputs& in);

struct NodeCostates {
    Vector lambda;
    Vector dlambda_dx;
};

/// Costates at step k for wealth values xk (one per path), obtained by re-simulating
/// steps k..m-1 from xk with the batch's own increments. Since the past does not
/// depend on X_k, this equals the full-path adjoint of X_k.
NodeCostates node_costates(const Simulator& sim, ControlPolicy& policy, const BatchInputs& in, int k,
                           const Vector& xk, const CostateOptions& opt = {});

/// Z = dlambda_dx * X * V^T pi_risky.
Vector z_process(double dlambda_dx, double x, const MarketParams& m, const Vector& pi_risky);

/// Costate samples at all nodes (steps 0..m) of every path in the batch.
std::vector<CostateSample> extract_costates(const Simulator& sim, ControlPolicy& policy, const BatchInputs& in,
                                            const CostateOptions& opt = {});

}  // namespace pgdpo
