#include "rddpm/chain.hpp"
#include "rddpm/equivariance.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace rddpm;
using namespace rddpm::testing;

TEST_CASE("noise schedule") {
  const NoiseSchedule s{4.0, 400, 0.01, 1.0};
  CHECK(s.h() == doctest::Approx(0.01));
  CHECK(s.sigma(0) == doctest::Approx(std::sqrt(0.01) * 0.01));
  CHECK(s.sigma(399) == doctest::Approx(std::sqrt(0.01) * s.g(399 * 0.01)));
  CHECK(s.beta(1) == s.sigma(0));
  CHECK(s.beta(400) == s.sigma(399));
  for (int k = 1; k < 400; ++k) CHECK(s.sigma(k) >= s.sigma(k - 1));
  CHECK(s.sigma_max() == s.sigma(399));
  CHECK_THROWS(s.sigma(400));
  CHECK_THROWS((NoiseSchedule{1.0, 10, 0.5, 0.1}.validate()));
  CHECK_THROWS((NoiseSchedule{0.0, 10, 0.1, 0.5}.validate()));
  CHECK_THROWS((NoiseSchedule{1.0, 10, 0.0, 0.5}.validate()));
}

TEST_CASE("g map examples") {
  const auto s2 = sphere(3);
  const Vec3 x(1, 0, 0);
  CHECK(g_map(s2, x, x, 0.3, Vec3::Zero()).norm() == 0.0);
  const Vec3 y(std::sqrt(1.0 - 0.09), 0.3, 0);
  const Vec g = g_map(s2, x, y, 0.3, Vec3::Zero());
  CHECK((g - Vec3(0, 1, 0)).norm() < 1e-14);

  // Tangent drift enters linearly.
  const Vec3 b(0, 0.4, -0.2);
  const double sigma = 0.3;
  CHECK((g_map(s2, x, y, sigma, b) - (g - sigma * b)).norm() < 1e-14);
}

TEST_CASE("forward steps invert through the g map") {
  for (const auto& [name, m] : builtin_manifolds()) {
    CAPTURE(name);
    Rng rng(3);
    const NewtonConfig cfg{m.kind() == ManifoldKind::Dihedral ? 1e-10 : 1e-12, 50};
    for (double sigma : {0.05, 0.1}) {
      double worst = 0.0;
      for (int i = 0; i < 300; ++i) {
        const Vec x = random_point(m, rng);
        auto out = forward_step(m, x, sigma, DriftSpec{}, rng, cfg);
        if (!out) continue;
        worst = std::max(worst, (g_map(m, x, out->y, sigma, Vec::Zero(x.size())) - out->v).norm());
        CHECK(m.on_manifold(out->y));
      }
      CHECK(worst <= 1e-7);
    }
  }
}

TEST_CASE("zero draw and zero drift leave the point fixed") {
  const auto so3 = special_orthogonal(3);
  Rng rng(5);
  const Vec x = flatten(haar_orthogonal(3, rng));
  const Vec zero = Vec::Zero(9);
  const auto out = projected_step(so3, x, 0.1, zero, zero, {});
  REQUIRE(out);
  CHECK((out->y - x).norm() < 1e-14);

  // Score equal to b pointwise: the reverse drift vanishes.
  const auto s2 = sphere(3);
  const Vec3 p(0, 0, 1);
  const Vec3 b(0.3, -0.1, 0.2);
  const auto rev = projected_step(s2, p, 0.1, Vec3(b - b), Vec3::Zero(), {}, true);
  REQUIRE(rev);
  CHECK((rev->y - p).norm() < 1e-14);
}

TEST_CASE("sphere forward failure rate at sigma 0.1") {
  const auto s2 = sphere(3);
  Rng rng(9);
  int failed = 0;
  for (int i = 0; i < 10000; ++i) {
    const Vec x = uniform_sphere(3, rng);
    if (!forward_step(s2, x, 0.1, DriftSpec{}, rng, {})) ++failed;
  }
  CHECK(failed == 0);
}

TEST_CASE("circle transition density value") {
  const auto s1 = sphere(2);
  const double sigma = 0.2, theta = 0.2;
  const Eigen::Vector2d x(1, 0), y(std::cos(theta), std::sin(theta));
  // Oracle: (2 pi sigma^2)^(-1/2) |cos theta| exp(-sin^2 theta / (2 sigma^2)).
  const double oracle = -0.5 * std::log(2 * std::numbers::pi * sigma * sigma) + std::log(std::cos(theta)) -
                        std::sin(theta) * std::sin(theta) / (2 * sigma * sigma);
  CHECK(oracle == doctest::Approx(0.1769958186950511).epsilon(1e-13));
  CHECK(log_forward_transition(s1, x, y, sigma, Eigen::Vector2d::Zero()) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(log_forward_transition(s1, x, x, sigma, Eigen::Vector2d::Zero()) ==
        doctest::Approx(-0.5 * std::log(2 * std::numbers::pi * sigma * sigma)).epsilon(1e-14));
}

TEST_CASE("circle transition density integrates to one") {
  const auto s1 = sphere(2);
  const Eigen::Vector2d x(1, 0);
  const int pts = 2048;
  for (double sigma : {0.05, 0.1, 0.2, 0.3}) {
    CAPTURE(sigma);
    double total = 0.0;
    for (int i = 0; i < pts; ++i) {
      const double th = -std::numbers::pi + 2 * std::numbers::pi * (i + 0.5) / pts;
      const Eigen::Vector2d y(std::cos(th), std::sin(th));
      const double lq = log_forward_transition(s1, x, y, sigma, Eigen::Vector2d::Zero());
      if (std::isfinite(lq)) total += std::exp(lq);
    }
    total *= 2 * std::numbers::pi / pts;
    CHECK(total >= 0.99);
    CHECK(total <= 1.001);
  }
}

TEST_CASE("points behind the base point are unreachable") {
  const auto s1 = sphere(2);
  const Eigen::Vector2d x(1, 0), y(std::cos(2.5), std::sin(2.5));
  CHECK_FALSE(reachable(s1, x, y));
  CHECK(log_forward_transition(s1, x, y, 0.3, Eigen::Vector2d::Zero()) == kLogZero);
  ReachabilityCheck off;
  off.enabled = false;
  CHECK(std::isfinite(log_forward_transition(s1, x, y, 0.3, Eigen::Vector2d::Zero(), off)));

  // Generic reachability through the solver agrees with the sphere shortcut.
  const auto so3 = special_orthogonal(3);
  Rng rng(2);
  const Vec a = flatten(haar_orthogonal(3, rng));
  Vec step = so3.project_tangent(a, rng.normal_vector(9));
  const auto near = projected_step(so3, a, 0.1, Vec::Zero(9), step, {1e-12, 50});
  REQUIRE(near);
  CHECK(reachable(so3, a, near->y));
}

TEST_CASE("reverse density mirrors the forward density with swapped base") {
  const auto s2 = sphere(3);
  Rng rng(21);
  for (int i = 0; i < 50; ++i) {
    const Vec x = uniform_sphere(3, rng);
    const auto step = forward_step(s2, x, 0.2, DriftSpec{}, rng, {});
    REQUIRE(step);
    const Vec& y = step->y;
    const Vec zero = Vec::Zero(3);
    CHECK(log_reverse_transition(s2, x, y, 0.2, zero, zero) ==
          doctest::Approx(log_forward_transition(s2, y, x, 0.2, zero)).epsilon(1e-14));
  }
}

TEST_CASE("reverse step with zero score matches the forward law") {
  // Same draws, same scale: identical outputs.
  const auto s2 = sphere(3);
  const Vec x = Vec3(0, 0.6, 0.8);
  Rng a(77), b(77);
  for (int i = 0; i < 20; ++i) {
    const auto f = forward_step(s2, x, 0.2, DriftSpec{}, a, {});
    const auto r = reverse_step(s2, x, 0.2, Vec::Zero(3), DriftSpec{}, b, {});
    REQUIRE(f);
    REQUIRE(r);
    CHECK((f->y - r->y).norm() < 1e-15);
  }
}

TEST_CASE("trajectories are consistent with their tangent draws") {
  for (const auto& [name, m] : builtin_manifolds()) {
    CAPTURE(name);
    Rng rng(8);
    const NoiseSchedule sched{1.0, 20, 0.05, 0.3};
    const Vec x0 = random_point(m, rng);
    DriftSpec drift;
    const auto traj = simulate_forward(m, x0, sched, drift, rng, {1e-10, 50});
    REQUIRE(traj);
    REQUIRE(traj->points.size() == 21);
    REQUIRE(traj->tangent_draws.size() == 20);
    CHECK(traj->points.front() == x0);
    for (int k = 0; k < 20; ++k) {
      CHECK(m.on_manifold(traj->points[k + 1]));
      const auto redo = projected_step(m, traj->points[k], sched.sigma(k), Vec::Zero(m.ambient_dim()),
                                       traj->tangent_draws[k], {1e-10, 50});
      REQUIRE(redo);
      CHECK((redo->y - traj->points[k + 1]).norm() <= 1e-6);
    }
  }
}

TEST_CASE("reverse simulation evaluates the score at t = (k+1) h") {
  const auto s2 = sphere(3);
  const NoiseSchedule sched{2.0, 10, 0.1, 0.3};
  std::vector<double> times;
  const ScoreFn score = [&](const Vec& x, double t) {
    times.push_back(t);
    return Vec(Vec::Zero(x.size()));
  };
  Rng rng(1);
  const auto traj = simulate_reverse(s2, Vec3(0, 0, 1), sched, score, DriftSpec{}, rng, {});
  REQUIRE(traj);
  REQUIRE(times.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(times[i] == doctest::Approx((10 - i) * 0.2));
  CHECK(traj->points.back() == Vec3(0, 0, 1));
}

TEST_CASE("failed trajectories are regenerated and eventually abort") {
  const auto s2 = sphere(3);
  Rng rng(4);
  FailureCounter fc;
  const NoiseSchedule sched{1.0, 50, 0.05, 0.5};
  const auto traj = simulate_forward_retrying(s2, Vec3(1, 0, 0), sched, DriftSpec{}, rng, {}, &fc);
  CHECK(fc.attempts >= 1);
  CHECK(traj.points.size() == 51);

  // Every step fails when the tangent move always exceeds the radius.
  const NoiseSchedule huge{1.0, 5, 50.0, 50.0};
  FailureCounter all;
  CHECK_THROWS_AS(simulate_forward_retrying(s2, Vec3(1, 0, 0), huge, DriftSpec{}, rng, {}, &all, 10),
                  AbortTooManyFailures);
  CHECK(all.attempts == 10);
  CHECK(all.percent() == doctest::Approx(100.0));
}

TEST_CASE("drift evaluation") {
  Vec x(3);
  x << 0.1, 0.2, 0.3;
  CHECK(drift_eval(DriftSpec{}, x).norm() == 0.0);

  Rng rng(6);
  const Vec ref = rng.normal_vector(15);
  DriftSpec d{DriftKind::RmsdHarmonic, 50.0, ref};
  CHECK(drift_eval(d, ref).norm() < 1e-10);
  Vec shifted = ref;
  for (int i = 0; i < 5; ++i) shifted.segment<3>(3 * i) += Vec3(0.7, -1.1, 2.0);
  CHECK(drift_eval(d, shifted).norm() < 1e-10);
  CHECK_THROWS(d.validate(12));
}

namespace {

// Largest KS distance between each coordinate of a single forward chain on S^2
// and the uniform law on [-1, 1] (the coordinate marginal of a uniform point).
double chain_coordinate_ks(long steps, std::uint64_t seed) {
  const auto s2 = sphere(3);
  Rng rng(seed);
  std::vector<std::vector<double>> coords(3);
  Vec x = Vec3(0, 0, 1);
  for (long i = 0; i < steps; ++i) {
    auto out = forward_step(s2, x, 0.1, DriftSpec{}, rng, {});
    REQUIRE(out);
    x = out->y;
    for (int c = 0; c < 3; ++c) coords[c].push_back(x[c]);
  }
  double worst = 0.0;
  for (auto& v : coords) {
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double cdf = (v[i] + 1.0) / 2.0;
      worst = std::max({worst, std::abs(cdf - i / n), std::abs(cdf - (i + 1) / n)});
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("equilibrium: 1e5-step sphere chain within KS 0.02") {
  CHECK(chain_coordinate_ks(100000, 1234) <= 0.02);
}

TEST_CASE("equilibrium: 1e6-step sphere chain within KS 0.02") {
  CHECK(chain_coordinate_ks(1000000, 1234) <= 0.02);
}
