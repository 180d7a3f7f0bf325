#pragma once

#include "rddpm/chain.hpp"
#include "rddpm/datasets.hpp"
#include "rddpm/eval.hpp"
#include "rddpm/trainer.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rddpm {

// Flat `key = value` settings; `#` starts a comment. Keys are dotted
// (`schedule.N`). Defaults depend on the manifold family; sphere data, SO(n)
// mixtures and the dihedral system each have their own set.
struct RunConfig {
  std::string command = "train";
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;
  int threads = 1;

  std::string manifold = "sphere";  // sphere | so | dihedral
  int sphere_n = 3;
  int so_k = 3;
  int dihedral_atoms = 4;
  std::array<int, 4> dihedral_indices{0, 1, 2, 3};
  double dihedral_phi0_deg = -70.0;

  NewtonConfig newton;
  RefineConfig refine;
  NoiseSchedule schedule;

  std::string drift_kind = "zero";  // zero | rmsd
  double drift_kappa = 50.0;
  std::filesystem::path drift_reference_file;

  int model_hidden_width = 512;
  int model_hidden_layers = 5;
  double model_ema_decay = 0.999;
  bool model_equivariant = false;

  int batch_size = 512;
  int epochs = 20000;
  int refresh_every = 1;
  int validate_every = 0;
  double validation_fraction = 0.1;
  double test_fraction = 0.1;
  int val_paths_per_point = 10;
  int nll_paths_per_point = 50;
  double learning_rate = 5e-4;
  double clip_norm = 10.0;
  int max_attempts = kMaxTrajectoryAttempts;

  std::string dataset_source = "uniform";  // csv | so_mixture | vmf | uniform | dihedral_toy
  int dataset_count = 1000;
  std::filesystem::path dataset_file;
  std::string dataset_format = "latlon";  // latlon | xyz
  bool dataset_refine = false;
  bool dataset_reassign_isolated = false;
  int dataset_lat_bins = 60;
  int dataset_lon_bins = 120;
  int dataset_modes = 2;
  double dataset_y_std = 0.05;
  double dataset_kappa = 20.0;
  double dataset_noise = 0.05;
  std::filesystem::path dataset_save;

  std::optional<double> prior_log_volume;  // SO(k): log Haar volume
  int prior_burn_in_steps = 2000;          // dihedral: forward steps per prior draw

  int generate_count = 1000;
  int forward_count = 10;  // trajectories written by the forward command
  std::vector<int> generate_record_steps{0};
  std::filesystem::path checkpoint;  // empty: out_dir/ckpt_best.txt
  std::string nll_split = "test";

  std::string stats_kind = "auto";  // auto | trace | dihedral | latlon
  int stats_bins = 100;
  std::vector<int> stats_powers{1, 2, 3, 4, 5};

  void validate() const;
  std::string to_text() const;  // resolved snapshot, parseable by parse_config_text
  std::filesystem::path checkpoint_path() const;
};

// Applies the family defaults for `manifold`, then the explicit settings.
// Each override is a `key = value` line that replaces the file's setting.
// Throws ConfigError on unknown keys, malformed values or failed validation.
RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides = {});
RunConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
// Family defaults with no overrides.
RunConfig default_config(const std::string& manifold);

LevelSetManifold build_manifold(const RunConfig& cfg);
TrainConfig train_config(const RunConfig& cfg);
DriftSpec build_drift(const RunConfig& cfg, const LevelSetManifold& m);

struct PreparedData {
  Dataset data;
  std::vector<Vec> train, val, test;
  std::optional<Vec> reference;  // dihedral reference cloud
  std::optional<VmfMixture> vmf;
  std::vector<Mat> so_centers;
};

// Builds or loads the dataset, refines it when requested and splits it.
PreparedData prepare_data(const RunConfig& cfg, const LevelSetManifold& m);

// Reference cloud for the equivariant wrapper and rmsd drift.
std::optional<Vec> equivariance_reference(const RunConfig& cfg, const LevelSetManifold& m);

// Uniform sphere: -log area. Haar on SO(k): -prior.log_volume, or 0 when
// unset (NLL then holds up to an additive constant). Dihedral: 0.
PriorLogDensity prior_log_density(const RunConfig& cfg, const LevelSetManifold& m);
bool prior_is_normalized(const RunConfig& cfg, const LevelSetManifold& m);
// Prior draws for the reverse chain: uniform sphere, Haar SO(k). The dihedral
// system has no uniform law, so each draw runs the forward chain (final step
// scale, rmsd drift) from the reference cloud for prior.burn_in_steps steps.
PriorSampler prior_sampler(const RunConfig& cfg, const LevelSetManifold& m);

}  // namespace rddpm
