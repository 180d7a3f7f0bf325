#pragma once

#include "rddpm/chain.hpp"
#include "rddpm/score.hpp"
#include "rddpm/trainer.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rddpm {

struct NllOptions {
  int paths_per_point = 50;
  NewtonConfig newton;
  ReachabilityCheck reach;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct NllEstimate {
  double mean_nll = 0.0;  // nats per point, over points with at least one path
  std::vector<double> per_point;  // NaN where every path failed
  std::vector<int> paths_used;
  int paths_per_point = 0;
  double standard_error = 0.0;
  int missing_points = 0;
  long long failed_paths = 0;
};

// -log p_theta(x0) = -log E_q[p(x^(N)) prod_k p_theta(x^(k)|x^(k+1)) / q(x^(k+1)|x^(k))],
// estimated with log-sum-exp over forward paths from each point. Failed paths
// are dropped from the average.
NllEstimate nll(const LevelSetManifold& m, const ScoreModel& model, const std::vector<Vec>& points,
                const NoiseSchedule& schedule, const DriftSpec& drift, const PriorLogDensity& prior,
                const NllOptions& opts);

// log p(x^(N)) + sum_k [log p_theta - log q] along one trajectory.
double path_log_weight(const LevelSetManifold& m, const ScoreModel& model, const Trajectory& traj,
                       const NoiseSchedule& schedule, const DriftSpec& drift, const PriorLogDensity& prior,
                       const ReachabilityCheck& reach = {});

using PriorSampler = std::function<Vec(Rng&)>;

struct GenerateOptions {
  int count = 0;
  std::vector<int> record_steps{0};  // k values to keep from each reverse path
  NewtonConfig newton;
  std::uint64_t seed = 0;
  int threads = 1;
  int max_attempts = kMaxTrajectoryAttempts;
};

struct GeneratedSamples {
  std::vector<int> steps;
  std::vector<std::vector<Vec>> by_step;  // by_step[s][i]: sample i at steps[s]
  FailureCounter failures;
};

// Runs the reverse chain from prior draws; failed paths are regenerated from a
// fresh prior draw.
GeneratedSamples generate(const LevelSetManifold& m, const ScoreModel& model, const NoiseSchedule& schedule,
                          const DriftSpec& drift, const PriorSampler& prior, const GenerateOptions& opts);

struct HistogramSummary {
  std::vector<double> edges;
  std::vector<long long> counts;
  std::string statistic_name;
};

// Uniform bins over the data range (or [lo, hi] when lo < hi).
HistogramSummary histogram(const std::vector<double>& values, int bins, std::string name, double lo = 0.0,
                           double hi = 0.0);

double trace_power(const Mat& s, int p);
std::vector<double> trace_power_values(const std::vector<Mat>& samples, int p);
std::vector<HistogramSummary> trace_moments(const std::vector<Mat>& samples, const std::vector<int>& powers,
                                            int bins = 100);

double standard_deviation(const std::vector<double>& v);

// Standard deviation of tr(S^3) over wrapped-normal samples around center.
double tr3_concentration_check(const Mat& center, double y_std, int count, Rng& rng);

// Exact W1 between the two empirical distributions.
double wasserstein1_1d(std::vector<double> a, std::vector<double> b);

struct FailureReport {
  FailureCounter forward;
  FailureCounter reverse;
  double forward_percent() const { return forward.percent(); }
  double reverse_percent() const { return reverse.percent(); }
};

FailureReport failure_report(const FailureCounter& forward, const FailureCounter& reverse);

// Dihedral angle (degrees) plus the Kabsch RMSD to every reference.
std::vector<HistogramSummary> dihedral_and_rmsd_stats(const std::vector<Vec>& samples,
                                                       const std::array<int, 4>& indices,
                                                       const std::vector<Vec>& references, int bins = 100);

void write_histogram_csv(const std::filesystem::path& path, const HistogramSummary& h);
void write_nll_csv(const std::filesystem::path& path, const NllEstimate& est);
void write_failures_csv(const std::filesystem::path& path, const FailureReport& report);

}  // namespace rddpm
