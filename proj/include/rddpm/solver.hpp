#pragma once

#include "rddpm/geometry.hpp"

#include <optional>

namespace rddpm {

struct NewtonConfig {
  double tol = 1e-6;
  int max_steps = 10;

  void validate() const;
};

struct ProjectionResult {
  Vec multiplier;  // c, length n-d
  bool converged = false;
  int iterations = 0;
  Vec point;  // x_mid + grad(x) c at the last iterate
};

// Solves constraint(x_mid + grad(x) c) = 0 for c by Newton's method from c = 0.
// Non-convergence and singular linear systems are reported via `converged`.
ProjectionResult newton_project(const LevelSetManifold& m, const Vec& x, const Vec& x_mid,
                                const NewtonConfig& cfg);

// Closed-form projection on the unit sphere: y = sqrt(1 - |step|^2) x + step.
// Empty when |step| >= 1.
std::optional<Vec> sphere_closed_form(const Vec& x, const Vec& step);

struct RefineConfig {
  double dt = 0.1;
  double target_tol = 1e-5;
  double max_time = 1e3;
};

// Integrates dx/dt = -xi(x) grad xi(x) with explicit Euler until |xi| <
// target_tol. Steps that increase |xi| are rejected and dt is halved.
// Throws NoConvergence if max_time is exceeded.
Vec refine_to_manifold(const LevelSetManifold& m, const Vec& x0, const RefineConfig& cfg = {});

}  // namespace rddpm
