#pragma once

#include "rddpm/rng.hpp"
#include "rddpm/types.hpp"

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>

namespace rddpm {

enum class ManifoldKind { Sphere, SpecialOrthogonal, Dihedral, Generic };

// Four atom indices and the target angle (radians) of a dihedral constraint.
struct DihedralSpec {
  int atoms = 0;
  std::array<int, 4> indices{0, 1, 2, 3};
  double phi0 = 0.0;
};

// Zero level set M = {x : constraint(x) = 0} of a smooth map R^n -> R^(n-d).
// Immutable after construction; safe to share across threads.
class LevelSetManifold {
 public:
  using ConstraintFn = std::function<Vec(const Vec&)>;
  // Returns the n x (n-d) matrix whose columns are the component gradients.
  using JacobianFn = std::function<Mat(const Vec&)>;

  LevelSetManifold(ManifoldKind kind, int n, int d, ConstraintFn constraint,
                   JacobianFn jacobian, double on_manifold_tol = 1e-8);

  ManifoldKind kind() const { return kind_; }
  int ambient_dim() const { return n_; }
  int intrinsic_dim() const { return d_; }
  int codim() const { return n_ - d_; }
  double on_manifold_tol() const { return tol_; }

  Vec constraint(const Vec& x) const { return constraint_(x); }
  Mat jacobian(const Vec& x) const { return jacobian_(x); }

  bool on_manifold(const Vec& x) const;

  // P(x) v without forming P. Throws RankDeficient when the Gram matrix of the
  // Jacobian is not positive definite.
  Vec project_tangent(const Vec& x, const Vec& v) const;
  // Column-wise P(x_j) v_j.
  Mat project_tangent_columns(const Mat& x, const Mat& v) const;

  // Order k of SO(k); 0 for other kinds.
  int so_order() const { return so_order_; }
  const std::optional<DihedralSpec>& dihedral_spec() const { return dihedral_; }

  std::string describe() const;

  friend LevelSetManifold special_orthogonal(int k);
  friend LevelSetManifold dihedral(int atoms, const std::array<int, 4>& indices, double phi0);

 private:
  ManifoldKind kind_;
  int n_;
  int d_;
  ConstraintFn constraint_;
  JacobianFn jacobian_;
  double tol_;
  int so_order_ = 0;
  std::optional<DihedralSpec> dihedral_;
};

struct TangentVector {
  Vec base;
  Vec vec;
};

struct TangentBasis {
  Vec base;
  Mat columns;  // n x d, orthonormal
};

// Condition-number guard on grad^T grad.
inline constexpr double kMaxGramCondition = 1e12;

Mat projection_matrix(const LevelSetManifold& m, const Vec& x);

TangentBasis tangent_basis(const LevelSetManifold& m, const Vec& x);

// v = P(x) z with z ~ N(0, I_n).
TangentVector sample_tangent_gaussian(const LevelSetManifold& m, const Vec& x, Rng& rng);
TangentVector tangent_from_ambient(const LevelSetManifold& m, const Vec& x, const Vec& z);

// log|det(a^T b)|, kLogZero when the determinant vanishes.
double basis_overlap_logdet(const TangentBasis& a, const TangentBasis& b);

Mat matrix_exponential_skew(const Mat& w);

LevelSetManifold sphere(int n);
LevelSetManifold special_orthogonal(int k);
LevelSetManifold dihedral(int atoms, const std::array<int, 4>& indices, double phi0);

// User-supplied constraint. When probe points are given the Jacobian is checked
// against central differences there (JacobianMismatch on failure).
LevelSetManifold generic(int n, int d, LevelSetManifold::ConstraintFn constraint,
                         LevelSetManifold::JacobianFn jacobian,
                         std::span<const Vec> probe_points = {});

// Largest relative deviation between the analytic Jacobian and a central
// finite difference of the constraint at x.
double jacobian_fd_error(const LevelSetManifold& m, const Vec& x, double step = 1e-6);

// Four-atom dihedral angle in (-pi, pi] and its gradient w.r.t. all 3*atoms
// coordinates.
double dihedral_angle(const Vec& x, const std::array<int, 4>& indices);
Vec dihedral_gradient(const Vec& x, const std::array<int, 4>& indices);

// Maps an angle into (-pi, pi].
double wrap_angle(double a);

// Row-major k x k view of a flattened SO(k) point and back.
Mat as_square(const Vec& x, int k);
Vec flatten(const Mat& s);

}  // namespace rddpm
