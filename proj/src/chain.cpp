#include "rddpm/chain.hpp"

#include "rddpm/equivariance.hpp"

#include <cmath>
#include <numbers>

namespace rddpm {

void NoiseSchedule::validate() const {
  if (!(T > 0.0)) throw std::invalid_argument("schedule T must be positive");
  if (N < 0) throw std::invalid_argument("schedule N must be nonnegative");
  if (!(gamma_min > 0.0) || !(gamma_max >= gamma_min))
    throw std::invalid_argument("schedule needs 0 < gamma_min <= gamma_max");
}

double NoiseSchedule::sigma(int k) const {
  if (k < 0 || k >= N) throw std::out_of_range("schedule step out of range");
  return std::sqrt(h()) * g(k * h());
}

double NoiseSchedule::sigma_max() const {
  double best = 0.0;
  for (int k = 0; k < N; ++k) best = std::max(best, sigma(k));
  return best;
}

void DriftSpec::validate(int n) const {
  if (kind == DriftKind::Zero) return;
  if (n % 3 != 0) throw std::invalid_argument("rmsd drift needs a 3D point cloud");
  if (reference.size() != n) throw std::invalid_argument("drift reference has the wrong length");
  if (!(kappa > 0.0)) throw std::invalid_argument("drift kappa must be positive");
}

Vec drift_eval(const DriftSpec& drift, const Vec& x) {
  switch (drift.kind) {
    case DriftKind::Zero: return Vec::Zero(x.size());
    case DriftKind::RmsdHarmonic: return rmsd_potential(x, drift.reference, drift.kappa).drift;
  }
  return Vec::Zero(x.size());
}

Vec g_map(const LevelSetManifold& m, const Vec& x, const Vec& y, double sigma, const Vec& drift_at_x) {
  return m.project_tangent(x, y - x - sigma * sigma * drift_at_x) / sigma;
}

std::optional<StepOutcome> projected_step(const LevelSetManifold& m, const Vec& x, double scale,
                                          const Vec& drift, const Vec& v, const NewtonConfig& cfg,
                                          bool project_drift) {
  const Vec b = project_drift ? m.project_tangent(x, drift) : drift;
  if (m.kind() == ManifoldKind::Sphere) {
    const Vec step = scale * scale * m.project_tangent(x, b) + scale * v;
    auto y = sphere_closed_form(x, step);
    if (!y) return std::nullopt;
    return StepOutcome{std::move(*y), v, 0};
  }
  const Vec x_mid = x + scale * scale * b + scale * v;
  ProjectionResult r = newton_project(m, x, x_mid, cfg);
  if (!r.converged) return std::nullopt;
  return StepOutcome{std::move(r.point), v, r.iterations};
}

std::optional<StepOutcome> forward_step(const LevelSetManifold& m, const Vec& x, double sigma,
                                        const DriftSpec& drift, Rng& rng, const NewtonConfig& cfg) {
  const TangentVector v = sample_tangent_gaussian(m, x, rng);
  return projected_step(m, x, sigma, drift_eval(drift, x), v.vec, cfg, false);
}

std::optional<StepOutcome> reverse_step(const LevelSetManifold& m, const Vec& x, double beta,
                                        const Vec& score, const DriftSpec& drift, Rng& rng,
                                        const NewtonConfig& cfg) {
  const TangentVector v = sample_tangent_gaussian(m, x, rng);
  return projected_step(m, x, beta, score - drift_eval(drift, x), v.vec, cfg, true);
}

std::optional<Trajectory> simulate_forward(const LevelSetManifold& m, const Vec& x0,
                                           const NoiseSchedule& schedule, const DriftSpec& drift,
                                           Rng& rng, const NewtonConfig& cfg) {
  Trajectory traj;
  traj.points.reserve(schedule.N + 1);
  traj.tangent_draws.reserve(schedule.N);
  traj.points.push_back(x0);
  for (int k = 0; k < schedule.N; ++k) {
    auto step = forward_step(m, traj.points.back(), schedule.sigma(k), drift, rng, cfg);
    if (!step) return std::nullopt;
    traj.tangent_draws.push_back(std::move(step->v));
    traj.points.push_back(std::move(step->y));
  }
  return traj;
}

std::optional<Trajectory> simulate_reverse(const LevelSetManifold& m, const Vec& xN,
                                           const NoiseSchedule& schedule, const ScoreFn& score,
                                           const DriftSpec& drift, Rng& rng, const NewtonConfig& cfg) {
  Trajectory traj;
  traj.points.assign(schedule.N + 1, Vec());
  traj.tangent_draws.assign(schedule.N, Vec());
  traj.points[schedule.N] = xN;
  for (int k = schedule.N - 1; k >= 0; --k) {
    const Vec& x = traj.points[k + 1];
    const Vec s = score(x, schedule.time(k + 1));
    auto step = reverse_step(m, x, schedule.beta(k + 1), s, drift, rng, cfg);
    if (!step) return std::nullopt;
    traj.tangent_draws[k] = std::move(step->v);
    traj.points[k] = std::move(step->y);
  }
  return traj;
}

Trajectory simulate_forward_retrying(const LevelSetManifold& m, const Vec& x0,
                                     const NoiseSchedule& schedule, const DriftSpec& drift, Rng& rng,
                                     const NewtonConfig& cfg, FailureCounter* failures, int max_attempts) {
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    auto traj = simulate_forward(m, x0, schedule, drift, rng, cfg);
    if (failures) ++failures->attempts;
    if (traj) return std::move(*traj);
    if (failures) ++failures->discarded;
  }
  throw AbortTooManyFailures("forward trajectory failed " + std::to_string(max_attempts) +
                             " times in a row on " + m.describe());
}

bool reachable(const LevelSetManifold& m, const Vec& x, const Vec& y, const ReachabilityCheck& check) {
  if (!check.enabled) return true;
  if (m.kind() == ManifoldKind::Sphere) return x.dot(y) > 0.0;
  const Vec x_mid = x + m.project_tangent(x, y - x);
  const ProjectionResult r = newton_project(m, x, x_mid, check.newton);
  return r.converged && (r.point - y).norm() <= check.tol * (1.0 + y.norm());
}

double log_transition_density(const LevelSetManifold& m, const Vec& from, const Vec& to, double scale,
                              const Vec& effective_drift, const ReachabilityCheck& check) {
  if (!reachable(m, from, to, check)) return kLogZero;
  const double logdet = basis_overlap_logdet(tangent_basis(m, from), tangent_basis(m, to));
  if (logdet == kLogZero) return kLogZero;
  const Vec g = g_map(m, from, to, scale, effective_drift);
  const double d = m.intrinsic_dim();
  return -0.5 * d * std::log(2.0 * std::numbers::pi * scale * scale) + logdet - 0.5 * g.squaredNorm();
}

double log_forward_transition(const LevelSetManifold& m, const Vec& x_k, const Vec& x_k1, double sigma_k,
                              const Vec& drift_at_xk, const ReachabilityCheck& check) {
  return log_transition_density(m, x_k, x_k1, sigma_k, drift_at_xk, check);
}

double log_reverse_transition(const LevelSetManifold& m, const Vec& x_k, const Vec& x_k1, double beta_k1,
                              const Vec& score_at_xk1, const Vec& drift_at_xk1,
                              const ReachabilityCheck& check) {
  return log_transition_density(m, x_k1, x_k, beta_k1, score_at_xk1 - drift_at_xk1, check);
}

}  // namespace rddpm
