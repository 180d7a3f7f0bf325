#pragma once

#include "rddpm/datasets.hpp"
#include "rddpm/geometry.hpp"
#include "rddpm/rng.hpp"

#include <doctest.h>

#include <array>
#include <string>
#include <vector>

namespace rddpm::testing {

inline const std::array<int, 4> kChain{0, 1, 2, 3};

struct NamedManifold {
  std::string name;
  LevelSetManifold m;
};

// The built-in families used throughout the tests.
inline std::vector<NamedManifold> builtin_manifolds() {
  return {{"S1", sphere(2)},
          {"S2", sphere(3)},
          {"SO3", special_orthogonal(3)},
          {"dihedral5", dihedral(5, kChain, -70.0 * 3.14159265358979323846 / 180.0)}};
}

// Random on-manifold point. The dihedral family perturbs a fixed reference
// cloud and refines it back.
inline Vec random_point(const LevelSetManifold& m, Rng& rng) {
  switch (m.kind()) {
    case ManifoldKind::Sphere:
      return uniform_sphere(m.ambient_dim(), rng);
    case ManifoldKind::SpecialOrthogonal:
      return flatten(haar_orthogonal(m.so_order(), rng));
    default: {
      static thread_local std::vector<std::pair<const LevelSetManifold*, Vec>> refs;
      const Vec* ref = nullptr;
      for (auto& [mp, v] : refs)
        if (mp == &m) ref = &v;
      if (!ref) {
        Rng r(7);
        refs.emplace_back(&m, dihedral_reference_cloud(m, r));
        ref = &refs.back().second;
      }
      return refine_to_manifold(m, *ref + 0.1 * rng.normal_vector(ref->size()), {0.1, 1e-12, 1e4});
    }
  }
}

inline double max_abs(const Mat& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace rddpm::testing
