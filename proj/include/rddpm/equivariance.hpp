#pragma once

#include "rddpm/chain.hpp"

#include <functional>

namespace rddpm {

// Minimizer (R*, w*) of |R (x - w) - x_ref| over rotations and translations.
struct Alignment {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double rmsd = 0.0;
};

// Clouds are flattened M x 3 (atom-major). Throws DegenerateCloud when M < 3
// or the centered cross-covariance has rank below two.
Alignment kabsch(const Vec& x, const Vec& x_ref);

double rmsd(const Vec& x, const Vec& x_ref, const Mat3& rotation, const Vec3& translation);

// R x_i + w for every atom.
Vec rigid_transform(const Mat3& rotation, const Vec3& translation, const Vec& x);
// R v_i for every atom.
Vec rotate_atoms(const Mat3& rotation, const Vec& v);
// R*(x - w*) for every atom.
Vec aligned_coordinates(const Alignment& a, const Vec& x);

struct Potential {
  double value = 0.0;
  Vec drift;  // b = -grad V
};

// V = kappa/2 |R*(x - w*) - x_ref|^2, b = -kappa R*^T (R*(x - w*) - x_ref).
Potential rmsd_potential(const Vec& x, const Vec& x_ref, double kappa);

using CloudMap = std::function<Vec(const Vec&)>;

// s(x) = R*^T f(R*(x - w*)).
Vec equivariant_wrap(const CloudMap& f, const Vec& x, const Vec& x_ref);

struct InvariancePair {
  double original = 0.0;
  double transformed = 0.0;
};

struct InvarianceCheck {
  InvariancePair forward;
  InvariancePair reverse;
};

// Evaluates forward and reverse log transition densities at (x, y) and at the
// rigidly moved pair (R x + w, R y + w). `score` is the (wrapped) reverse drift.
InvarianceCheck verify_invariant_transition(const LevelSetManifold& m, const Vec& x, const Vec& y,
                                            double sigma, const DriftSpec& drift, const CloudMap& score,
                                            const Mat3& rotation, const Vec3& translation);

Mat3 random_rotation(Rng& rng);

}  // namespace rddpm
