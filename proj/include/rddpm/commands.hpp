#pragma once

#include "rddpm/config.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

namespace rddpm {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitNumerical = 3,
  kExitIo = 4,
};

// Runs body and maps library exceptions to exit codes, printing the message
// to stderr.
int guarded(const std::function<void()>& body);

// Each command writes into cfg.out_dir (created if missing) together with a
// `config.resolved` snapshot. They throw; wrap them in guarded().
void cmd_train(const RunConfig& cfg);
// x^(0) rows in samples.csv, other recorded steps in samples_step<k>.csv.
void cmd_generate(const RunConfig& cfg);
// forward_<i>.csv for the first forward.count training points.
void cmd_forward(const RunConfig& cfg);
// nll.csv over eval.split using the EMA weights of eval.checkpoint.
NllEstimate cmd_nll(const RunConfig& cfg);
// hist_<statistic>.csv for every statistic of `kind` over the samples file.
void cmd_stats(const RunConfig& cfg, const std::filesystem::path& samples_csv, const std::string& kind);

// Network shape for the config, input n + 1 and output n.
ScoreNet initial_network(const RunConfig& cfg, const LevelSetManifold& m);
// Loads a checkpoint and checks it fits the manifold.
Checkpoint load_model(const RunConfig& cfg, const LevelSetManifold& m);

}  // namespace rddpm
