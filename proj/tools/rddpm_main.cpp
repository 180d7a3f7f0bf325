// Command line front end: train, generate, forward, nll, stats.
#include "rddpm/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace rddpm;

int main(int argc, char** argv) {
  CLI::App app{"Denoising diffusion models on level-set manifolds"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "settings file (key = value)")->required();
    sub->add_option("--set", overrides, "override a setting, e.g. --set train.epochs=10");
  };

  auto* train_cmd = app.add_subcommand("train", "train a score network");
  add_common(train_cmd);

  int count = -1;
  std::vector<int> steps;
  auto* gen_cmd = app.add_subcommand("generate", "sample from a trained model");
  add_common(gen_cmd);
  gen_cmd->add_option("--count", count, "number of samples");
  gen_cmd->add_option("--steps", steps, "extra reverse steps k to record");

  auto* fwd_cmd = app.add_subcommand("forward", "dump forward trajectories");
  add_common(fwd_cmd);

  std::string ckpt, split;
  auto* nll_cmd = app.add_subcommand("nll", "estimate the negative log-likelihood");
  add_common(nll_cmd);
  nll_cmd->add_option("--ckpt", ckpt, "checkpoint (default out_dir/ckpt_best.txt)");
  nll_cmd->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));

  std::string samples, kind = "auto";
  auto* stats_cmd = app.add_subcommand("stats", "histogram statistics of samples");
  add_common(stats_cmd);
  stats_cmd->add_option("--samples", samples, "samples CSV")->required();
  stats_cmd->add_option("--kind", kind, "auto, trace, dihedral or latlon")
      ->check(CLI::IsMember({"auto", "trace", "dihedral", "latlon"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  return guarded([&] {
    if (gen_cmd->parsed()) {
      if (count >= 0) overrides.push_back("generate.count = " + std::to_string(count));
      if (!steps.empty()) {
        std::string list = "0";
        for (int k : steps) list += "," + std::to_string(k);
        overrides.push_back("generate.record_steps = " + list);
      }
    }
    if (nll_cmd->parsed()) {
      if (!ckpt.empty()) overrides.push_back("eval.checkpoint = " + ckpt);
      if (!split.empty()) overrides.push_back("eval.split = " + split);
    }
    const RunConfig cfg = parse_config(config_path, overrides);
    if (train_cmd->parsed())
      cmd_train(cfg);
    else if (gen_cmd->parsed())
      cmd_generate(cfg);
    else if (fwd_cmd->parsed())
      cmd_forward(cfg);
    else if (nll_cmd->parsed())
      cmd_nll(cfg);
    else
      cmd_stats(cfg, samples, kind);
  });
}
