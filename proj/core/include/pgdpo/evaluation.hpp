#pragma once

#include "pgdpo/adam.hpp"
#include "pgdpo/barrier.hpp"
#include "pgdpo/costate.hpp"
#include "pgdpo/merton.hpp"
#include "pgdpo/rollout.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace pgdpo {

/// Controls the learned policies are scored against. Unconstrained: Merton
/// risky weights. Constrained: the constant weights maximising
/// pi.mu_tilde - gamma/2 pi_r^T Sigma pi_r over the simplex, which is optimal for
/// CRRA utility with constant coefficients. Consumption in both cases follows the
/// value ODE at the decay rate implied by those weights.
struct ReferenceControls {
    bool constrained = false;
    Vector weights;  // n risky weights, or n + 1 with the risk-free weight first
    std::shared_ptr<const ValueOracle> oracle;

    double consumption(double t, double x) const { return oracle->consumption_ratio(t) * x; }
    OraclePolicy policy() const { return OraclePolicy(weights, oracle, constrained); }
};

/// argmax over the simplex of pi.mu_tilde - gamma/2 pi_r^T Sigma pi_r (n + 1 weights).
Vector constrained_merton_weights(const MarketParams& m, double gamma);

ReferenceControls make_reference(const MarketParams& m, const RolloutConfig& cfg, bool constrained,
                                 int grid_size = 1000);

struct OneShotOptions {
    std::vector<double> schedule{1e-2, 1e-4, 1e-6};
    NewtonOptions newton;
};

struct OneShotControl {
    Vector pi;  // n risky weights, or n + 1 with the risk-free weight first when constrained
    double c = 0.0;
    bool slope_clamped = false;
    bool converged = true;
};

/// Hamiltonian maximiser at one node given (lambda, dlambda/dx). Consumption inverts
/// the marginal-utility condition; investment is the closed form when unconstrained
/// and the barrier Newton solution on the simplex otherwise. Throws DomainError for
/// lambda <= 0.
OneShotControl oneshot_controls(double t, double x, double lambda, double dlambda_dx, const MarketParams& m,
                                bool constrained, double gamma, double rho, const OneShotOptions& opt = {},
                                const std::optional<Vector>& warm_start = std::nullopt);

struct MseReport {
    double consumption = 0.0;
    double investment = 0.0;
    double asset_min = 0.0;  // per-asset band of the investment error
    double asset_max = 0.0;
    Index nodes = 0;
};

/// Relative errors over nodes (one row per node): mean ||pi - ref||^2 / ||ref||^2 for
/// investment and the scalar analogue for consumption. The per-asset error of
/// coordinate i is mean (pi_i - ref_i)^2 / mean(||ref||^2 / d).
MseReport relative_mse(const Matrix& pi, const Vector& c, const Matrix& pi_ref, const Vector& c_ref);

struct FocReport {
    double consumption = 0.0;
    double investment = 0.0;
    double consumption_scaled = 0.0;  // residuals divided by lambda before squaring
    double investment_scaled = 0.0;
    Index nodes = 0;
};

/// e^{-rho t} U'(C) - lambda.
double consumption_foc_residual(const CostateSample& s, double gamma, double rho);

/// Stationarity vector of the Hamiltonian in the weights. Unconstrained: the n risky
/// partials with the risk-free weight implied. Constrained: the n + 1 barrier
/// conditions with eta eliminated as mean_i(dH/dpi_i + eps/pi_i). Weights exactly at
/// zero contribute their KKT violation max(0, dH/dpi_i - eta) instead.
Vector investment_foc_residual(const CostateSample& s, const MarketParams& m, bool constrained, double epsilon,
                               double gamma);

/// Mean squared residuals over control nodes (investment also averaged over coordinates).
FocReport foc_residuals(const std::vector<CostateSample>& samples, const MarketParams& m, bool constrained,
                        double epsilon, double gamma, double rho);

using PolicyFactory = std::function<std::unique_ptr<ControlPolicy>()>;

/// Costate samples for every path of `in`, computed in fixed-size path chunks so
/// the result does not depend on the worker count. Sample index is path * (m + 1) + k.
std::vector<CostateSample> extract_costates_chunked(const Simulator& sim, const PolicyFactory& make_policy,
                                                    const BatchInputs& in, const CostateOptions& opt, Index chunk,
                                                    int workers);

struct SurrogateConfig {
    Index samples = 100000;
    int epochs = 50;
    Index minibatch = 1000;
    double lr = 1e-3;
};

/// Policy nets regressed onto OneShot controls so that they can be rolled out and
/// have their own costates and residuals measured.
class Surrogate {
public:
    Surrogate(const NetShape& investment, const NetShape& consumption, ConsumptionForm form, std::uint64_t seed);

    /// Minibatch Adam regression (descent) on squared errors; warm-starts from the
    /// current parameters. Returns the final investment MSE over the data divided by
    /// the target variance.
    double fit(const Vector& t, const Vector& x, const Matrix& pi, const Vector& c, const SurrogateConfig& cfg,
               std::uint32_t round);

    PolicyNet& investment() { return inv_; }
    PolicyNet& consumption() { return cons_; }
    const PolicyNet& investment() const { return inv_; }
    const PolicyNet& consumption() const { return cons_; }
    AdamState& investment_adam() { return inv_adam_; }
    AdamState& consumption_adam() { return cons_adam_; }
    ConsumptionForm form() const { return form_; }
    std::uint64_t seed() const { return seed_; }

private:
    PolicyNet inv_;
    PolicyNet cons_;
    AdamState inv_adam_;
    AdamState cons_adam_;
    ConsumptionForm form_;
    std::uint64_t seed_;
};

struct EvalConfig {
    Index paths = 256;
    std::uint32_t stream = 0;
    double tail_cutoff = 0.01;  // nodes with T - t below this have no usable reference
    CostateOptions costate;
    OneShotOptions oneshot;
    double foc_epsilon = 1e-6;
    Index chunk = 64;
    int workers = 1;
};

struct EvalRecord {
    Index nodes = 0;
    Index skipped = 0;  // nodes dropped by the tail cutoff or a non-positive costate
    MseReport baseline;
    FocReport baseline_foc;
    bool has_oneshot = false;
    MseReport oneshot;
    FocReport oneshot_foc;
    std::optional<double> surrogate_fit;
    Index clamped = 0;  // OneShot nodes whose costate slope needed the concavity guard
};

/// Scores a pair of policy nets on a fixed evaluation batch.
class Evaluator {
public:
    Evaluator(const MarketParams& m, const RolloutConfig& rollout, bool constrained, EvalConfig cfg);

    const ReferenceControls& reference() const { return reference_; }
    const EvalConfig& config() const { return cfg_; }
    const Simulator& simulator() const { return sim_; }

    /// Control-node costate samples of the evaluation batch under `make_policy`.
    std::vector<CostateSample> samples(const PolicyFactory& make_policy, Index* skipped = nullptr) const;

    /// Baseline metrics, plus OneShot metrics when `with_oneshot`. In the
    /// constrained case a surrogate (if given) is refitted and its own residuals reported.
    EvalRecord evaluate(const PolicyNet& inv, const PolicyNet& cons, ConsumptionForm form, bool with_oneshot,
                        Surrogate* surrogate, const SurrogateConfig& scfg, std::uint32_t round) const;
    /// Same for any policy source, e.g. the reference controls themselves.
    EvalRecord evaluate(const PolicyFactory& make_policy, bool with_oneshot, Surrogate* surrogate = nullptr,
                        const SurrogateConfig& scfg = {}, std::uint32_t round = 0) const;

    /// OneShot controls at each sample, one row per sample.
    void oneshot_at(const std::vector<CostateSample>& samples, Matrix& pi, Vector& c, Index* clamped) const;

    /// Reference controls at each sample, one row per sample.
    void reference_at(const std::vector<CostateSample>& samples, Matrix& pi, Vector& c) const;

private:
    MarketParams market_;
    RolloutConfig rollout_;
    bool constrained_;
    EvalConfig cfg_;
    Simulator sim_;
    ReferenceControls reference_;
    BatchInputs batch_;
};

}  // namespace pgdpo
