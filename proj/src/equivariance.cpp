#include "rddpm/equivariance.hpp"

#include <cmath>

namespace rddpm {

namespace {

Eigen::Index atom_count(const Vec& x) {
  if (x.size() % 3 != 0) throw std::invalid_argument("point cloud length must be a multiple of 3");
  return x.size() / 3;
}

Vec3 centroid(const Vec& x) {
  const Eigen::Index m = atom_count(x);
  Vec3 c = Vec3::Zero();
  for (Eigen::Index i = 0; i < m; ++i) c += x.segment<3>(3 * i);
  return c / static_cast<double>(m);
}

}  // namespace

Vec rigid_transform(const Mat3& rotation, const Vec3& translation, const Vec& x) {
  Vec out(x.size());
  for (Eigen::Index i = 0; i < atom_count(x); ++i)
    out.segment<3>(3 * i) = rotation * x.segment<3>(3 * i) + translation;
  return out;
}

Vec rotate_atoms(const Mat3& rotation, const Vec& v) {
  return rigid_transform(rotation, Vec3::Zero(), v);
}

Vec aligned_coordinates(const Alignment& a, const Vec& x) {
  Vec out(x.size());
  for (Eigen::Index i = 0; i < atom_count(x); ++i)
    out.segment<3>(3 * i) = a.rotation * (x.segment<3>(3 * i) - a.translation);
  return out;
}

double rmsd(const Vec& x, const Vec& x_ref, const Mat3& rotation, const Vec3& translation) {
  const Eigen::Index m = atom_count(x);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    sum += (rotation * (x.segment<3>(3 * i) - translation) - x_ref.segment<3>(3 * i)).squaredNorm();
  return std::sqrt(sum / static_cast<double>(m));
}

Alignment kabsch(const Vec& x, const Vec& x_ref) {
  const Eigen::Index m = atom_count(x);
  if (x_ref.size() != x.size()) throw std::invalid_argument("clouds differ in size");
  if (m < 3) throw DegenerateCloud("alignment needs at least 3 atoms");
  const Vec3 cx = centroid(x);
  const Vec3 cr = centroid(x_ref);
  Mat3 cov = Mat3::Zero();
  for (Eigen::Index i = 0; i < m; ++i)
    cov += (x_ref.segment<3>(3 * i) - cr) * (x.segment<3>(3 * i) - cx).transpose();
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (!(svd.singularValues()[1] > 1e-10)) throw DegenerateCloud("point clouds are colinear or coincident");
  Mat3 fix = Mat3::Identity();
  fix(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  Alignment a;
  a.rotation = svd.matrixU() * fix * svd.matrixV().transpose();
  a.translation = cx - a.rotation.transpose() * cr;
  a.rmsd = rmsd(x, x_ref, a.rotation, a.translation);
  return a;
}

Potential rmsd_potential(const Vec& x, const Vec& x_ref, double kappa) {
  const Alignment a = kabsch(x, x_ref);
  const Vec residual = aligned_coordinates(a, x) - x_ref;
  return {0.5 * kappa * residual.squaredNorm(), -kappa * rotate_atoms(a.rotation.transpose(), residual)};
}

Vec equivariant_wrap(const CloudMap& f, const Vec& x, const Vec& x_ref) {
  const Alignment a = kabsch(x, x_ref);
  return rotate_atoms(a.rotation.transpose(), f(aligned_coordinates(a, x)));
}

InvarianceCheck verify_invariant_transition(const LevelSetManifold& m, const Vec& x, const Vec& y,
                                            double sigma, const DriftSpec& drift, const CloudMap& score,
                                            const Mat3& rotation, const Vec3& translation) {
  const Vec tx = rigid_transform(rotation, translation, x);
  const Vec ty = rigid_transform(rotation, translation, y);
  InvarianceCheck out;
  out.forward.original = log_forward_transition(m, x, y, sigma, drift_eval(drift, x));
  out.forward.transformed = log_forward_transition(m, tx, ty, sigma, drift_eval(drift, tx));
  // Reverse move from x^(k+1) = x to x^(k) = y.
  out.reverse.original = log_reverse_transition(m, y, x, sigma, score(x), drift_eval(drift, x));
  out.reverse.transformed = log_reverse_transition(m, ty, tx, sigma, score(tx), drift_eval(drift, tx));
  return out;
}

Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace rddpm
