#pragma once

#include "pgdpo/market.hpp"
#include "pgdpo/training.hpp"

#include <string>
#include <vector>

namespace pgdpo::cli {

inline constexpr int kCsvSchemaVersion = 1;

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDegenerateMarket = 3;
inline constexpr int kExitNonFinite = 4;
inline constexpr int kExitMismatch = 5;

struct GenerateArgs {
    MarketConfig market;
    std::string out = "market.json";
};

struct TrainArgs {
    std::string market_path;
    std::string out_dir = "run";
    TrainConfig train;
    RolloutConfig rollout;
    bool resume = false;
};

struct EvalArgs {
    std::string market_path;
    std::string checkpoint;  // a checkpoint file, or "oracle" for the reference controls
    TrainMode mode = TrainMode::PgDpo;
    bool constrained = false;  // only read for the oracle
    Index nodes = 256;
    std::vector<int> assets;  // heatmap assets; 0 is the risk-free weight
    std::string out_dir = "eval";
    RolloutConfig rollout;  // only read for the oracle
    int workers = 1;
};

struct ExportArgs {
    std::string run_dir;
    std::string out_dir;  // defaults to the run directory
};

int cmd_generate(const GenerateArgs& args);
int cmd_train(TrainArgs args);
int cmd_eval(const EvalArgs& args);
int cmd_export(const ExportArgs& args);

/// Worker count after applying PGDPO_WORKERS, which overrides the flag when set.
int workers_from_env(int flag_value);

}  // namespace pgdpo::cli
