#pragma once

#include "rddpm/geometry.hpp"
#include "rddpm/solver.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace rddpm {

// sigma_k = beta_{k+1} = sqrt(h) g(k h), g linear from gamma_min to gamma_max.
struct NoiseSchedule {
  double T = 1.0;
  int N = 100;
  double gamma_min = 0.01;
  double gamma_max = 1.0;

  void validate() const;
  double h() const { return T / N; }
  double g(double t) const { return gamma_min + (t / T) * (gamma_max - gamma_min); }
  // Forward scale for step k -> k+1, k in [0, N).
  double sigma(int k) const;
  // Reverse scale for step k -> k-1, k in [1, N].
  double beta(int k) const { return sigma(k - 1); }
  double time(int k) const { return k * h(); }
  double sigma_max() const;
};

enum class DriftKind { Zero, RmsdHarmonic };

struct DriftSpec {
  DriftKind kind = DriftKind::Zero;
  double kappa = 50.0;
  Vec reference;  // flattened M x 3 cloud, RmsdHarmonic only

  void validate(int n) const;
};

Vec drift_eval(const DriftSpec& drift, const Vec& x);

// x^(0..N) and the tangent draws v^(0..N-1) that produced them.
struct Trajectory {
  std::vector<Vec> points;
  std::vector<Vec> tangent_draws;
};

struct StepOutcome {
  Vec y;
  Vec v;
  int newton_iterations = 0;
};

// G_x^(sigma)(y; b) = P(x) (y - x - sigma^2 b) / sigma.
Vec g_map(const LevelSetManifold& m, const Vec& x, const Vec& y, double sigma, const Vec& drift_at_x);

// One projected move from x with a fixed tangent draw v:
// y = x + scale^2 drift + scale v + grad(x) c, constraint(y) = 0.
// `project_drift` applies P(x) to the drift first (reverse chain form).
std::optional<StepOutcome> projected_step(const LevelSetManifold& m, const Vec& x, double scale,
                                          const Vec& drift, const Vec& v, const NewtonConfig& cfg,
                                          bool project_drift = false);

std::optional<StepOutcome> forward_step(const LevelSetManifold& m, const Vec& x, double sigma,
                                        const DriftSpec& drift, Rng& rng, const NewtonConfig& cfg);

// Reverse move from x = x^(k+1) with effective drift P(x)(score - b(x)).
std::optional<StepOutcome> reverse_step(const LevelSetManifold& m, const Vec& x, double beta,
                                        const Vec& score, const DriftSpec& drift, Rng& rng,
                                        const NewtonConfig& cfg);

std::optional<Trajectory> simulate_forward(const LevelSetManifold& m, const Vec& x0,
                                           const NoiseSchedule& schedule, const DriftSpec& drift,
                                           Rng& rng, const NewtonConfig& cfg);

// Score callback taking a point and the physical time t.
using ScoreFn = std::function<Vec(const Vec& x, double t)>;

// Runs k = N-1 .. 0 from x^(N); the score for the move out of x^(k+1) is
// evaluated at t = (k+1) h. Returned points are indexed by k.
std::optional<Trajectory> simulate_reverse(const LevelSetManifold& m, const Vec& xN,
                                           const NoiseSchedule& schedule, const ScoreFn& score,
                                           const DriftSpec& drift, Rng& rng, const NewtonConfig& cfg);

// Tallies of generated and discarded trajectories.
struct FailureCounter {
  long long attempts = 0;
  long long discarded = 0;

  void merge(const FailureCounter& o) {
    attempts += o.attempts;
    discarded += o.discarded;
  }
  double percent() const { return attempts == 0 ? 0.0 : 100.0 * discarded / attempts; }
};

inline constexpr int kMaxTrajectoryAttempts = 100;

// Regenerates a failed trajectory with fresh noise; throws
// AbortTooManyFailures after max_attempts.
Trajectory simulate_forward_retrying(const LevelSetManifold& m, const Vec& x0,
                                     const NoiseSchedule& schedule, const DriftSpec& drift, Rng& rng,
                                     const NewtonConfig& cfg, FailureCounter* failures = nullptr,
                                     int max_attempts = kMaxTrajectoryAttempts);

struct ReachabilityCheck {
  bool enabled = true;
  NewtonConfig newton{1e-10, 20};
  double tol = 1e-4;
};

// True if y is the point the projection from x lands on for the tangent move
// P(x)(y - x), i.e. y lies in the reachable set of the deterministic solver.
bool reachable(const LevelSetManifold& m, const Vec& x, const Vec& y, const ReachabilityCheck& check = {});

// log q(y | x) = -(d/2) log(2 pi scale^2) + log|det(U_x^T U_y)| - |G_x(y; drift)|^2 / 2,
// with the no-solution probability taken as zero. kLogZero if y is not
// reachable or the tangent spaces are orthogonal.
double log_transition_density(const LevelSetManifold& m, const Vec& from, const Vec& to, double scale,
                              const Vec& effective_drift, const ReachabilityCheck& check = {});

double log_forward_transition(const LevelSetManifold& m, const Vec& x_k, const Vec& x_k1, double sigma_k,
                              const Vec& drift_at_xk, const ReachabilityCheck& check = {});

// log p(x^(k) | x^(k+1)); the drift at x^(k+1) is score - b.
double log_reverse_transition(const LevelSetManifold& m, const Vec& x_k, const Vec& x_k1, double beta_k1,
                              const Vec& score_at_xk1, const Vec& drift_at_xk1,
                              const ReachabilityCheck& check = {});

}  // namespace rddpm
