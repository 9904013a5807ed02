#pragma once

#include "pgdpo/adam.hpp"
#include "pgdpo/evaluation.hpp"
#include "pgdpo/market.hpp"
#include "pgdpo/policy.hpp"
#include "pgdpo/rollout.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pgdpo {

enum class TrainMode {
    PgDpo,    // policy nets only
    OneShot,  // same training, plus OneShot controls scored after the warm-up
};

const char* to_string(TrainMode mode) noexcept;
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
    TrainMode mode = TrainMode::PgDpo;
    bool constrained = false;
    int iterations = 1000;
    Index batch = 1000;
    AdamConfig adam;
    int warmup = 1000;
    int eval_every = 500;
    std::vector<int> milestones;  // extra evaluation iterations
    int checkpoint_every = 500;
    int utility_window = 500;
    Index hidden = 200;
    ConsumptionForm consumption_form = ConsumptionForm::WealthFraction;
    Index chunk = 128;  // paths per gradient chunk; fixes the reduction order
    int workers = 1;
    std::uint64_t seed = 42;
    EvalConfig eval;
    SurrogateConfig surrogate;

    void validate() const;
    bool is_eval_iteration(int iteration) const;
};

/// Both configs as one JSON document, and back.
std::string config_to_json(const TrainConfig& train, const RolloutConfig& rollout);
void config_from_json(const std::string& text, TrainConfig& train, RolloutConfig& rollout);

struct PolicyGradient {
    Vector theta;  // investment net
    Vector phi;    // consumption net
    double j_hat = 0.0;
};

/// Gradient of the batch-mean objective by one reverse sweep per chunk of paths.
PolicyGradient autodiff_gradient(const Simulator& sim, const PolicyNet& inv, const PolicyNet& cons,
                                 ConsumptionForm form, const BatchInputs& in, Index chunk = 0, int workers = 1);

/// The same gradient assembled from extracted costates: with lambda^H_k =
/// lambda_{k+1} X_{k+1} / X_k and Z^H_k = lambda^H_k (dW_k / dt - V^T pi_k), the
/// investment cotangent at step k is (lambda^H X mu_tilde + X V Z^H) dt and the
/// consumption cotangent is (e^{-rho t} U'(C) - lambda^H) dt, each pulled back
/// through its network.
PolicyGradient pontryagin_gradient(const Simulator& sim, const PolicyNet& inv, const PolicyNet& cons,
                                   ConsumptionForm form, const BatchInputs& in);

/// One line of metrics.csv. Evaluation fields are empty on iterations without an evaluation.
struct MetricRow {
    int iteration = 0;
    double j_hat = 0.0;
    double utility_rolling_mean = 0.0;
    double grad_norm_theta = 0.0;
    double grad_norm_phi = 0.0;
    std::optional<EvalRecord> eval;
    double wall_clock = 0.0;  // seconds since the run (or resume) started; not part of metrics.csv
};

inline constexpr int kMetricsSchemaVersion = 1;
std::string metrics_header();
std::string format_metrics_row(const MetricRow& row, TrainMode mode, bool constrained);

/// Network shapes implied by a configuration.
NetShape investment_shape(const TrainConfig& cfg, Index assets, double horizon);
NetShape consumption_shape(const TrainConfig& cfg, Index assets, double horizon);

/// Runs the PG-DPO loop: per iteration a fresh batch, one backward pass, one Adam
/// ascent step on each network.
class Trainer {
public:
    Trainer(const MarketParams& market, const RolloutConfig& rollout, const TrainConfig& cfg);

    int iteration() const noexcept { return iteration_; }
    const TrainConfig& config() const noexcept { return cfg_; }
    const RolloutConfig& rollout() const noexcept { return rollout_; }
    const MarketParams& market() const noexcept { return market_; }
    const PolicyNet& investment() const noexcept { return inv_; }
    const PolicyNet& consumption() const noexcept { return cons_; }
    PolicyNet& investment() noexcept { return inv_; }
    PolicyNet& consumption() noexcept { return cons_; }
    /// Built on first use; the reference controls are solved once per trainer.
    const Evaluator& evaluator() const;
    const std::optional<Surrogate>& surrogate() const noexcept { return surrogate_; }

    /// Runs one iteration (and its evaluation, if scheduled). Throws
    /// NonFiniteObjective with the batch seed and stream in the message.
    MetricRow step();

    /// Evaluates the current nets without training.
    EvalRecord evaluate(bool with_oneshot);

    void save_checkpoint(const std::string& path) const;
    /// Restores a checkpoint written for the same market and network shapes.
    /// Throws CheckpointMismatch otherwise.
    void load_checkpoint(const std::string& path);

private:
    MarketParams market_;
    RolloutConfig rollout_;
    TrainConfig cfg_;
    Simulator sim_;
    PolicyNet inv_;
    PolicyNet cons_;
    AdamState inv_adam_;
    AdamState cons_adam_;
    std::vector<double> window_;  // recent j_hat values, oldest first
    int iteration_ = 0;
    mutable std::optional<Evaluator> evaluator_;
    std::optional<Surrogate> surrogate_;
};

/// Header fields of a checkpoint file, readable without a market.
struct CheckpointInfo {
    int version = 0;
    Index assets = 0;
    int iteration = 0;
    std::string market_hash;
    std::string investment_head;
    std::string consumption_head;
    std::string config_json;
};

CheckpointInfo read_checkpoint_info(const std::string& path);

struct TrainResult {
    PolicyNet investment;
    PolicyNet consumption;
    std::vector<MetricRow> rows;
};

/// Convenience drivers over Trainer.
TrainResult train_pgdpo(const MarketParams& market, const RolloutConfig& rollout, TrainConfig cfg);
TrainResult train_oneshot(const MarketParams& market, const RolloutConfig& rollout, TrainConfig cfg);

}  // namespace pgdpo
