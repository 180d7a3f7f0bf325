#include "rddpm/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace rddpm {

namespace fs = std::filesystem;

int guarded(const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const AbortTooManyFailures& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const NoConvergence& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const RankDeficient& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid setting: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

namespace {

void prepare_out_dir(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  std::ofstream f(cfg.out_dir / "config.resolved");
  if (!f) throw IoError("cannot write " + (cfg.out_dir / "config.resolved").string());
  f << cfg.to_text();
}

std::optional<Vec> model_reference(const RunConfig& cfg, const LevelSetManifold& m) {
  if (!cfg.model_equivariant) return std::nullopt;
  return equivariance_reference(cfg, m);
}

const std::vector<Vec>& split_points(const PreparedData& d, const std::string& split) {
  if (split == "train") return d.train;
  if (split == "val") return d.val;
  return d.test;
}

}  // namespace

ScoreNet initial_network(const RunConfig& cfg, const LevelSetManifold& m) {
  Rng rng(derive_seed(cfg.seed, "init"));
  return ScoreNet(ScoreNet::layout(m.ambient_dim(), cfg.model_hidden_width, cfg.model_hidden_layers), rng,
                  cfg.model_ema_decay);
}

Checkpoint load_model(const RunConfig& cfg, const LevelSetManifold& m) {
  Checkpoint ck = load_checkpoint(cfg.checkpoint_path());
  if (ck.net.input_dim() != m.ambient_dim() + 1 || ck.net.output_dim() != m.ambient_dim())
    throw ConfigError("checkpoint network shape does not match the manifold dimension " +
                      std::to_string(m.ambient_dim()));
  return ck;
}

void cmd_train(const RunConfig& cfg) {
  prepare_out_dir(cfg);
  const LevelSetManifold m = build_manifold(cfg);
  const PreparedData data = prepare_data(cfg, m);
  const DriftSpec drift = build_drift(cfg, m);
  ScoreNet net = initial_network(cfg, m);

  std::ofstream metrics(cfg.out_dir / "metrics.csv");
  if (!metrics) throw IoError("cannot write metrics.csv");
  metrics << "epoch,train_loss,val_nll,ema_flag,wall_seconds\n" << std::setprecision(17);

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    metrics << r.epoch << ',' << r.train_loss << ',';
    if (r.val_nll) metrics << *r.val_nll;
    metrics << ',' << (r.ema ? 1 : 0) << ',' << r.wall_seconds << '\n';
    metrics.flush();
  };
  const fs::path best_path = cfg.out_dir / "ckpt_best.txt";
  hooks.on_best = [&](const ScoreNet& n, const AdamState& a) { save_checkpoint(best_path, n, a); };

  std::cout << "training on " << data.train.size() << " points (" << data.val.size() << " val, "
            << data.test.size() << " test), " << net.num_params() << " parameters\n";
  const TrainResult result = train(net, m, data.train, data.val, train_config(cfg), drift,
                                   prior_log_density(cfg, m), model_reference(cfg, m), hooks);
  save_checkpoint(cfg.out_dir / "ckpt_last.txt", net, result.adam);
  write_failures_csv(cfg.out_dir / "failures.csv", failure_report(result.forward_failures, {}));
  if (!metrics) throw IoError("failed writing metrics.csv");

  std::cout << "epochs: " << cfg.epochs << "\n";
  if (!result.history.empty()) std::cout << "final train loss: " << result.history.back().train_loss << "\n";
  if (result.best_val_nll) std::cout << "best validation nll: " << *result.best_val_nll << "\n";
  std::cout << "forward trajectories discarded: " << result.forward_failures.discarded << " of "
            << result.forward_failures.attempts << "\n";
}

void cmd_generate(const RunConfig& cfg) {
  prepare_out_dir(cfg);
  const LevelSetManifold m = build_manifold(cfg);
  const DriftSpec drift = build_drift(cfg, m);
  const Checkpoint ck = load_model(cfg, m);
  const ScoreModel model(ck.net, cfg.schedule.T, model_reference(cfg, m), true);

  GenerateOptions opts;
  opts.count = cfg.generate_count;
  opts.record_steps = cfg.generate_record_steps;
  if (std::find(opts.record_steps.begin(), opts.record_steps.end(), 0) == opts.record_steps.end())
    opts.record_steps.insert(opts.record_steps.begin(), 0);
  opts.newton = cfg.newton;
  opts.seed = derive_seed(cfg.seed, "generate");
  opts.threads = cfg.threads;
  opts.max_attempts = cfg.max_attempts;
  const GeneratedSamples out = generate(m, model, cfg.schedule, drift, prior_sampler(cfg, m), opts);

  for (std::size_t s = 0; s < out.steps.size(); ++s) {
    const int k = out.steps[s];
    const fs::path p = cfg.out_dir / (k == 0 ? std::string("samples.csv") : "samples_step" + std::to_string(k) + ".csv");
    write_points_csv(p, out.by_step[s], m.ambient_dim());
  }
  write_failures_csv(cfg.out_dir / "failures.csv", failure_report({}, out.failures));
  std::cout << "generated " << cfg.generate_count << " samples; reverse trajectories discarded: "
            << out.failures.discarded << " of " << out.failures.attempts << "\n";
}

void cmd_forward(const RunConfig& cfg) {
  prepare_out_dir(cfg);
  const LevelSetManifold m = build_manifold(cfg);
  const PreparedData data = prepare_data(cfg, m);
  const DriftSpec drift = build_drift(cfg, m);
  const std::size_t count = std::min<std::size_t>(cfg.forward_count, data.train.size());
  FailureCounter failures;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(cfg.seed, "forward-dump", i));
    const Trajectory traj =
        simulate_forward_retrying(m, data.train[i], cfg.schedule, drift, rng, cfg.newton, &failures, cfg.max_attempts);
    const fs::path p = cfg.out_dir / ("forward_" + std::to_string(i) + ".csv");
    std::ofstream f(p);
    if (!f) throw IoError("cannot write " + p.string());
    f << "step_index";
    for (int j = 0; j < m.ambient_dim(); ++j) f << ",x" << j;
    f << '\n' << std::setprecision(17);
    for (std::size_t k = 0; k < traj.points.size(); ++k) {
      f << k;
      for (int j = 0; j < m.ambient_dim(); ++j) f << ',' << traj.points[k][j];
      f << '\n';
    }
    if (!f) throw IoError("failed writing " + p.string());
  }
  write_failures_csv(cfg.out_dir / "failures.csv", failure_report(failures, {}));
  std::cout << "wrote " << count << " forward trajectories\n";
}

NllEstimate cmd_nll(const RunConfig& cfg) {
  prepare_out_dir(cfg);
  const LevelSetManifold m = build_manifold(cfg);
  const PreparedData data = prepare_data(cfg, m);
  const DriftSpec drift = build_drift(cfg, m);
  const Checkpoint ck = load_model(cfg, m);
  const ScoreModel model(ck.net, cfg.schedule.T, model_reference(cfg, m), true);
  const auto& points = split_points(data, cfg.nll_split);
  if (points.empty()) throw ConfigError("split '" + cfg.nll_split + "' is empty");

  NllOptions opts;
  opts.paths_per_point = cfg.nll_paths_per_point;
  opts.newton = cfg.newton;
  opts.seed = derive_seed(cfg.seed, "nll-" + cfg.nll_split);
  opts.threads = cfg.threads;
  const NllEstimate est = nll(m, model, points, cfg.schedule, drift, prior_log_density(cfg, m), opts);
  write_nll_csv(cfg.out_dir / "nll.csv", est);
  std::cout << std::setprecision(6) << "nll (" << cfg.nll_split << ", " << points.size()
            << " points): " << est.mean_nll << " +- " << est.standard_error << "\n";
  if (!prior_is_normalized(cfg, m)) std::cout << "note: prior is unnormalized; nll holds up to an additive constant\n";
  if (est.missing_points > 0) std::cout << "points with every path failed: " << est.missing_points << "\n";
  if (est.failed_paths > 0) std::cout << "failed paths dropped: " << est.failed_paths << "\n";
  return est;
}

void cmd_stats(const RunConfig& cfg, const fs::path& samples_csv, const std::string& kind_in) {
  prepare_out_dir(cfg);
  const LevelSetManifold m = build_manifold(cfg);
  const std::vector<Vec> samples = read_points_csv(samples_csv);
  for (const Vec& s : samples)
    if (s.size() != m.ambient_dim()) throw ConfigError("sample width does not match the manifold");

  std::string kind = kind_in;
  if (kind == "auto")
    kind = cfg.manifold == "so" ? "trace" : cfg.manifold == "dihedral" ? "dihedral" : "latlon";

  std::vector<HistogramSummary> hists;
  if (kind == "trace") {
    if (cfg.manifold != "so") throw ConfigError("trace statistics need manifold = so");
    std::vector<Mat> mats;
    for (const Vec& s : samples) mats.push_back(as_square(s, cfg.so_k));
    hists = trace_moments(mats, cfg.stats_powers, cfg.stats_bins);
  } else if (kind == "dihedral") {
    if (cfg.manifold != "dihedral") throw ConfigError("dihedral statistics need manifold = dihedral");
    hists = dihedral_and_rmsd_stats(samples, cfg.dihedral_indices, {*equivariance_reference(cfg, m)}, cfg.stats_bins);
  } else if (kind == "latlon") {
    if (cfg.manifold != "sphere" || cfg.sphere_n != 3) throw ConfigError("latlon statistics need the 2-sphere");
    std::vector<double> lat, lon;
    for (const Vec& s : samples) {
      double a = 0.0, b = 0.0;
      xyz_to_latlon(s, a, b);
      lat.push_back(a);
      lon.push_back(b);
    }
    hists.push_back(histogram(lat, cfg.stats_bins, "lat_deg", -90.0, 90.0));
    hists.push_back(histogram(lon, cfg.stats_bins, "lon_deg", -180.0, 180.0));
  } else {
    throw ConfigError("unknown statistics kind '" + kind + "'");
  }
  for (const auto& h : hists) write_histogram_csv(cfg.out_dir / ("hist_" + h.statistic_name + ".csv"), h);
  std::cout << "wrote " << hists.size() << " histograms over " << samples.size() << " samples\n";
}

}  // namespace rddpm
