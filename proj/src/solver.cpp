#include "rddpm/solver.hpp"

#include <cmath>

namespace rddpm {

void NewtonConfig::validate() const {
  if (!(tol >= 1e-12 && tol <= 1e-2)) throw std::invalid_argument("newton tol must lie in [1e-12, 1e-2]");
  if (max_steps < 1 || max_steps > 100) throw std::invalid_argument("newton max_steps must lie in [1, 100]");
}

ProjectionResult newton_project(const LevelSetManifold& m, const Vec& x, const Vec& x_mid,
                                const NewtonConfig& cfg) {
  const Mat jx = m.jacobian(x);
  ProjectionResult out;
  out.multiplier = Vec::Zero(m.codim());
  out.point = x_mid;
  Vec residual = m.constraint(out.point);
  if (residual.norm() < cfg.tol) {
    out.converged = true;
    return out;
  }
  for (int step = 0; step < cfg.max_steps; ++step) {
    const Mat system = m.jacobian(out.point).transpose() * jx;
    Eigen::PartialPivLU<Mat> lu(system);
    const double det = std::abs(lu.determinant());
    if (!std::isfinite(det) || det == 0.0 || lu.rcond() < 1e-14) return out;
    const Vec u = lu.solve(-residual);
    if (!u.allFinite()) return out;
    out.multiplier += u;
    out.point = x_mid + jx * out.multiplier;
    out.iterations = step + 1;
    residual = m.constraint(out.point);
    if (!residual.allFinite()) return out;
    if (residual.norm() < cfg.tol) {
      out.converged = true;
      return out;
    }
  }
  return out;
}

std::optional<Vec> sphere_closed_form(const Vec& x, const Vec& step) {
  const double s2 = step.squaredNorm();
  if (s2 >= 1.0) return std::nullopt;
  return Vec(std::sqrt(1.0 - s2) * x + step);
}

Vec refine_to_manifold(const LevelSetManifold& m, const Vec& x0, const RefineConfig& cfg) {
  Vec x = x0;
  Vec xi = m.constraint(x);
  double res = xi.norm();
  double dt = cfg.dt;
  double t = 0.0;
  while (res >= cfg.target_tol) {
    if (t > cfg.max_time || dt < 1e-14)
      throw NoConvergence("refinement did not reach the target tolerance");
    const Vec trial = x - dt * (m.jacobian(x) * xi);
    const Vec trial_xi = m.constraint(trial);
    const double trial_res = trial_xi.norm();
    if (!(trial_res < res)) {
      dt *= 0.5;
      continue;
    }
    t += dt;
    x = trial;
    xi = trial_xi;
    res = trial_res;
  }
  return x;
}

}  // namespace rddpm
