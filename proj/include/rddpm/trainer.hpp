#pragma once

#include "rddpm/chain.hpp"
#include "rddpm/score.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace rddpm {

using PriorLogDensity = std::function<double(const Vec&)>;

struct TrainConfig {
  int batch_size = 512;
  int epochs = 1;
  int refresh_every = 1;   // l_f
  int validate_every = 0;  // 0: same as refresh_every
  NoiseSchedule schedule;
  NewtonConfig newton;
  std::uint64_t seed = 0;
  int threads = 1;
  int val_paths_per_point = 10;
  int nll_paths_per_point = 50;
  double learning_rate = 5e-4;
  double clip_norm = 10.0;
  int max_attempts = kMaxTrajectoryAttempts;
  // Columns per network evaluation chunk inside a batch.
  int chunk_columns = 256;

  void validate() const;
};

// One forward trajectory per training point plus the data-dependent part of
// the reverse residual: residual[i].col(k) =
// P(x^(k+1)) (x^(k) - x^(k+1) + beta_{k+1}^2 b(x^(k+1))) / beta_{k+1}.
struct TrajectoryBuffer {
  std::vector<Trajectory> trajectories;
  std::vector<Mat> residuals;
  int epoch_stamp = 0;
  FailureCounter failures;
};

TrajectoryBuffer generate_buffer(const LevelSetManifold& m, const std::vector<Vec>& points,
                                 const NoiseSchedule& schedule, const DriftSpec& drift,
                                 const NewtonConfig& newton, std::uint64_t seed, int epoch, int threads,
                                 int max_attempts = kMaxTrajectoryAttempts);

struct BatchLoss {
  double loss = 0.0;       // (1/2|I|) sum_i sum_k |G|^2
  Mat points;              // x^(k+1) for every (i, k), n x (|I| N)
  Vec times;               // t_{k+1}
  Mat score_gradient;      // d loss / d s at each column = -beta P G / |I|
  Vec parameter_gradient;  // filled when requested
};

BatchLoss batch_loss(const LevelSetManifold& m, const ScoreModel& model, const TrajectoryBuffer& buffer,
                     const std::vector<std::size_t>& batch, const NoiseSchedule& schedule,
                     bool with_parameter_gradient = false, int chunk_columns = 256);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_nll;
  bool ema = true;
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  ScoreNet best;
  AdamState adam;
  std::optional<double> best_val_nll;
  FailureCounter forward_failures;
  TrajectoryBuffer final_buffer;
};

// Optional hooks: called after every epoch and on each new best model.
struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(const ScoreNet&, const AdamState&)> on_best;
};

TrainResult train(ScoreNet& net, const LevelSetManifold& m, const std::vector<Vec>& train_points,
                  const std::vector<Vec>& val_points, const TrainConfig& cfg, const DriftSpec& drift,
                  const PriorLogDensity& prior, std::optional<Vec> equivariant_reference = std::nullopt,
                  const TrainHooks& hooks = {});

struct Estimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

// C^(N) = -E[log p(x^(N)) + 1/2 sum_k |v^(k)|^2] over the buffer.
Estimate variational_constant(const TrajectoryBuffer& buffer, const PriorLogDensity& prior);

// Mean and standard error of the per-trajectory loss 1/2 sum_k |G|^2.
Estimate trajectory_loss(const LevelSetManifold& m, const ScoreModel& model, const TrajectoryBuffer& buffer,
                         const NoiseSchedule& schedule);

}  // namespace rddpm
