#pragma once

#include "pgdpo/market.hpp"
#include "pgdpo/merton.hpp"
#include "pgdpo/policy.hpp"
#include "pgdpo/random.hpp"
#include "pgdpo/tape.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace pgdpo {

struct RolloutConfig {
    double horizon = 1.0;
    int steps = 5;
    double x_lo = 0.1;
    double x_hi = 2.0;
    Index batch = 1000;
    double rho = 0.1;
    double gamma = 2.0;
    double kappa_bequest = 1.0;
    std::uint64_t seed = 42;

    void validate() const;
};

/// CRRA utility, logarithmic at gamma = 1.
double utility(double c, double gamma);
double marginal_utility(double c, double gamma);
NodeId utility(Tape& tape, NodeId c, double gamma);

struct InitialNode {
    double t0;
    double x0;
};

/// Uniform draws on [0, horizon] x [x_lo, x_hi], a pure function of (seed, tag, stream).
std::vector<InitialNode> sample_initial_nodes(const RolloutConfig& cfg, Index count, std::uint64_t seed,
                                              std::uint32_t stream, StreamTag tag = StreamTag::InitialNodes);

/// Initial nodes, step sizes and Brownian increments for one batch of paths.
struct BatchInputs {
    Vector t0;
    Vector x0;
    Vector dt;
    std::vector<Matrix> dw;  // one (B x n) block per step, row i ~ N(0, dt_i I)

    Index size() const noexcept { return t0.size(); }
    int steps() const noexcept { return static_cast<int>(dw.size()); }
    Vector times(int k) const { return t0 + static_cast<double>(k) * dt; }
};

/// Draws a batch for training iteration `stream`. Evaluation batches pass
/// StreamTag::Eval so they never overlap with training draws.
BatchInputs make_batch(const RolloutConfig& cfg, Index assets, Index batch, std::uint64_t seed, std::uint32_t stream,
                       StreamTag tag = StreamTag::InitialNodes);
/// Same increments layout for caller-chosen initial nodes.
BatchInputs make_batch(const RolloutConfig& cfg, Index assets, const std::vector<InitialNode>& nodes,
                       std::uint64_t seed, std::uint32_t stream, StreamTag tag);

/// Rows [first, first + count) of a batch.
BatchInputs slice(const BatchInputs& in, Index first, Index count);

/// Source of controls for a rollout. Investment output is (B x n) when the
/// risk-free weight is implicit and (B x (n+1)) with column 0 risk-free otherwise.
class ControlPolicy {
public:
    virtual ~ControlPolicy() = default;

    virtual Index assets() const = 0;
    virtual bool explicit_riskfree() const = 0;

    /// Called once per tape before any taped evaluation.
    virtual void attach(Tape&) {}
    virtual NodeId investment(Tape& tape, const Vector& t, NodeId x) = 0;
    virtual NodeId consumption(Tape& tape, const Vector& t, NodeId x) = 0;

    virtual Matrix investment(const Vector& t, const Vector& x) const = 0;
    virtual Vector consumption(const Vector& t, const Vector& x) const = 0;
};

/// How a Positive consumption head maps to the consumption rate. With
/// WealthFraction the head output is C / X, so C = X softplus(z); a wealth-free
/// rate lets low-wealth paths be drained to zero within a few steps.
/// Bounded heads always give C directly since their bounds are on C.
enum class ConsumptionForm { WealthFraction, Absolute };

const char* to_string(ConsumptionForm form) noexcept;
ConsumptionForm consumption_form_from_string(const std::string& s);

/// Pair of policy networks; investment head Identity or Simplex, consumption Positive or Bounded.
class NetPolicy : public ControlPolicy {
public:
    NetPolicy(const PolicyNet& investment, const PolicyNet& consumption,
              ConsumptionForm form = ConsumptionForm::WealthFraction);

    Index assets() const override { return inv_->shape().assets; }
    bool explicit_riskfree() const override { return inv_->shape().head == HeadKind::Simplex; }
    void attach(Tape& tape) override;
    NodeId investment(Tape& tape, const Vector& t, NodeId x) override;
    NodeId consumption(Tape& tape, const Vector& t, NodeId x) override;
    Matrix investment(const Vector& t, const Vector& x) const override;
    Vector consumption(const Vector& t, const Vector& x) const override;

    const ParamNodes& investment_nodes() const { return inv_nodes_; }
    const ParamNodes& consumption_nodes() const { return cons_nodes_; }
    Vector investment_gradient(const Tape& tape) const { return inv_->gradient(tape, inv_nodes_); }
    Vector consumption_gradient(const Tape& tape) const { return cons_->gradient(tape, cons_nodes_); }

private:
    const PolicyNet* inv_;
    const PolicyNet* cons_;
    bool scale_by_wealth_;
    ParamNodes inv_nodes_;
    ParamNodes cons_nodes_;
    const Tape* attached_ = nullptr;
};

/// Closed-form controls: constant weights and C = g(t)^{-1/gamma} X. With
/// `explicit_rf` the weights carry the risk-free weight first (n + 1 entries).
class OraclePolicy : public ControlPolicy {
public:
    OraclePolicy(Vector weights, std::shared_ptr<const ValueOracle> oracle, bool explicit_rf = false);

    Index assets() const override { return explicit_ ? weights_.size() - 1 : weights_.size(); }
    bool explicit_riskfree() const override { return explicit_; }
    NodeId investment(Tape& tape, const Vector& t, NodeId x) override;
    NodeId consumption(Tape& tape, const Vector& t, NodeId x) override;
    Matrix investment(const Vector& t, const Vector& x) const override;
    Vector consumption(const Vector& t, const Vector& x) const override;

    const ValueOracle& oracle() const { return *oracle_; }
    const Vector& weights() const { return weights_; }

private:
    Vector weights_;
    std::shared_ptr<const ValueOracle> oracle_;
    bool explicit_;
};

/// Node handles of one recorded rollout.
struct RolloutTrace {
    int first_step = 0;
    std::vector<NodeId> x;   // wealth at steps first_step..m
    std::vector<NodeId> pi;  // controls at steps first_step..m-1
    std::vector<NodeId> c;
    NodeId j_paths{};        // (B x 1) per-path objective from first_step on
    NodeId j_mean{};         // (1 x 1)
};

/// Values of a simulated batch.
struct RolloutBatch {
    BatchInputs inputs;
    Matrix x;                  // B x (m+1)
    std::vector<Matrix> pi;    // per step, B x n or B x (n+1)
    Matrix c;                  // B x m
    Matrix running_utility;    // B x m, discounted and multiplied by dt
    Vector bequest_utility;    // B
    Vector j;                  // B
    double j_mean = 0.0;
};

/// Exponential-Euler wealth simulation with controls frozen on each step.
class Simulator {
public:
    Simulator(const MarketParams& market, const RolloutConfig& cfg);

    const MarketParams& market() const noexcept { return market_; }
    const RolloutConfig& config() const noexcept { return cfg_; }

    /// Records steps first_step..m-1 starting from the (B x 1) wealth node x_start.
    RolloutTrace record(Tape& tape, ControlPolicy& policy, const BatchInputs& in, NodeId x_start,
                        int first_step = 0) const;
    /// Records a full rollout from in.x0 (as a tape variable).
    RolloutTrace record(Tape& tape, ControlPolicy& policy, const BatchInputs& in) const;

    RolloutBatch collect(const Tape& tape, const RolloutTrace& trace, const BatchInputs& in) const;
    RolloutBatch simulate(ControlPolicy& policy, const BatchInputs& in) const;

    /// Per-path log-growth exponent of one step, for checking and for manual assembly.
    double step_exponent(const Vector& pi, bool explicit_riskfree, double c, double x, double dt,
                         const Vector& dw) const;

private:
    MarketParams market_;
    RolloutConfig cfg_;
    std::shared_ptr<const Matrix> excess_;      // n x 1, mu - r
    std::shared_ptr<const Matrix> sigma_;       // n x n
    std::shared_ptr<const Matrix> chol_;        // n x n
    std::shared_ptr<const Matrix> mu_tilde_;    // (n+1) x 1, r prepended
    std::shared_ptr<const Matrix> sigma_tilde_; // (n+1) x (n+1), zero row/col 0
    std::shared_ptr<const Matrix> chol_tilde_;  // (n+1) x n, zero row 0
};

}  // namespace pgdpo
