#include "rddpm/solver.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace rddpm;
using namespace rddpm::testing;

TEST_CASE("newton on the sphere from a tangent move") {
  const auto s2 = sphere(3);
  const Vec3 x(1, 0, 0);
  const auto r = newton_project(s2, x, Vec3(1, 0.3, 0), {1e-12, 20});
  REQUIRE(r.converged);
  // Oracle: (1 + c)^2 + 0.09 = 1.
  const double c = std::sqrt(1.0 - 0.09) - 1.0;
  CHECK(c == doctest::Approx(-0.04606079858305434).epsilon(1e-14));
  CHECK(r.multiplier[0] == doctest::Approx(c).epsilon(1e-10));
  CHECK(r.point[0] == doctest::Approx(0.9539392014169457).epsilon(1e-10));
  CHECK(r.point[1] == doctest::Approx(0.3));
  CHECK(r.point[2] == doctest::Approx(0.0));
}

TEST_CASE("newton already on the manifold") {
  const auto s2 = sphere(3);
  const Vec3 x(0, 0.6, 0.8);
  const auto r = newton_project(s2, x, x, {});
  CHECK(r.converged);
  CHECK(r.iterations <= 1);
  CHECK(r.multiplier.norm() == doctest::Approx(0.0));
}

TEST_CASE("newton reports failure when no root exists") {
  const auto s2 = sphere(3);
  const auto r = newton_project(s2, Vec3(1, 0, 0), Vec3(1, 1.5, 0), {});
  CHECK_FALSE(r.converged);
}

TEST_CASE("newton config bounds") {
  CHECK_THROWS(NewtonConfig{1e-13, 10}.validate());
  CHECK_THROWS(NewtonConfig{1e-1, 10}.validate());
  CHECK_THROWS(NewtonConfig{1e-6, 0}.validate());
  CHECK_THROWS(NewtonConfig{1e-6, 101}.validate());
  CHECK_NOTHROW(NewtonConfig{1e-12, 100}.validate());
}

TEST_CASE("sphere closed form") {
  const Vec3 x(1, 0, 0);
  const auto y = sphere_closed_form(x, Vec3(0, 0.3, 0));
  REQUIRE(y);
  CHECK((*y)[0] == doctest::Approx(0.9539392014169457).epsilon(1e-14));
  CHECK(sphere_closed_form(x, Vec3::Zero()).value() == x);
  CHECK_FALSE(sphere_closed_form(x, Vec3(0, 1.2, 0)));
  CHECK_FALSE(sphere_closed_form(x, Vec3(0, 1.0, 0)));
}

TEST_CASE("newton matches the sphere closed form") {
  const auto s2 = sphere(3);
  Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const Vec x = uniform_sphere(3, rng);
    Vec step = s2.project_tangent(x, rng.normal_vector(3));
    step *= 0.9 * rng.uniform() / step.norm();
    const auto closed = sphere_closed_form(x, step);
    const auto r = newton_project(s2, x, x + step, {1e-12, 50});
    REQUIRE(closed);
    REQUIRE(r.converged);
    worst = std::max(worst, (r.point - *closed).norm());
    CHECK(std::abs(closed->norm() - 1.0) <= 1e-12);
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("newton iteration counts at small step sizes") {
  Rng rng(7);
  const NewtonConfig cfg{1e-6, 10};
  for (const auto& [name, m] : builtin_manifolds()) {
    if (m.kind() == ManifoldKind::Dihedral) continue;
    CAPTURE(name);
    int within_three = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
      const Vec x = random_point(m, rng);
      const Vec v = m.project_tangent(x, rng.normal_vector(m.ambient_dim()));
      const auto r = newton_project(m, x, x + 0.1 * v, cfg);
      if (r.converged && r.iterations <= 3) ++within_three;
    }
    CHECK(within_three >= 0.999 * trials);
  }
}

TEST_CASE("refinement onto the manifold") {
  const auto s2 = sphere(3);
  const Vec3 on(0, 1, 0);
  CHECK(refine_to_manifold(s2, on) == on);

  const Vec r = refine_to_manifold(s2, Vec3(1.05, 0, 0));
  CHECK((r - Vec3(1, 0, 0)).norm() <= 1e-5);

  const auto so3 = special_orthogonal(3);
  Rng rng(13);
  for (int i = 0; i < 20; ++i) {
    const Vec s = flatten(haar_orthogonal(3, rng));
    const Vec noisy = s + 1e-2 * rng.normal_vector(9);
    const Vec refined = refine_to_manifold(so3, noisy);
    CHECK(so3.constraint(refined).norm() < 1e-5);
    CHECK((refined - noisy).norm() <= 0.05);
  }
}

TEST_CASE("refinement residual strictly decreases") {
  // Re-run the flow step by step with the same rule and track the residual.
  const auto so3 = special_orthogonal(3);
  Rng rng(19);
  const Vec x0 = flatten(haar_orthogonal(3, rng)) + 0.05 * rng.normal_vector(9);
  double prev = so3.constraint(x0).norm();
  Vec x = x0;
  for (int i = 0; i < 200 && prev >= 1e-5; ++i) {
    const Vec next = refine_to_manifold(so3, x, {0.1, prev * 0.999, 1e3});
    const double res = so3.constraint(next).norm();
    CHECK(res < prev);
    prev = res;
    x = next;
  }
  CHECK(prev < 1e-5);
}

TEST_CASE("refinement gives up after max_time") {
  const auto s2 = sphere(3);
  CHECK_THROWS_AS(refine_to_manifold(s2, Vec3(3, 0, 0), {0.1, 1e-5, 0.05}), NoConvergence);
}
