#include "rddpm/geometry.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace rddpm {

LevelSetManifold::LevelSetManifold(ManifoldKind kind, int n, int d, ConstraintFn constraint,
                                   JacobianFn jacobian, double on_manifold_tol)
    : kind_(kind),
      n_(n),
      d_(d),
      constraint_(std::move(constraint)),
      jacobian_(std::move(jacobian)),
      tol_(on_manifold_tol) {
  if (n <= 0 || d <= 0 || d >= n)
    throw std::invalid_argument("manifold dimensions must satisfy 0 < d < n");
  if (!(on_manifold_tol > 0.0)) throw std::invalid_argument("on_manifold_tol must be positive");
}

bool LevelSetManifold::on_manifold(const Vec& x) const {
  return x.size() == n_ && x.allFinite() && constraint(x).norm() <= tol_;
}

Vec LevelSetManifold::project_tangent(const Vec& x, const Vec& v) const {
  if (kind_ == ManifoldKind::Sphere) {
    const double r = x.norm();
    if (r == 0.0) throw RankDeficient("sphere projection at the origin");
    const Vec u = x / r;
    return v - u * u.dot(v);
  }
  const Mat j = jacobian(x);
  const Mat gram = j.transpose() * j;
  Eigen::LLT<Mat> llt(gram);
  if (llt.info() != Eigen::Success) throw RankDeficient("constraint Jacobian is rank deficient");
  return v - j * llt.solve(j.transpose() * v);
}

namespace {

// The normal space of {S^T S = I} at S is {S Sym : Sym symmetric} for any full
// rank S, so P V = V - S Sym with S^T S Sym + Sym S^T S = S^T V + V^T S.
// Solved in the eigenbasis of S^T S; equal to the Jacobian form of P.
template <int K>
Mat project_so_columns(const Mat& x, const Mat& v, int k = K) {
  using Sq = Eigen::Matrix<double, K, K, Eigen::RowMajor>;
  using Map = Eigen::Map<const Sq>;
  Mat out(v.rows(), v.cols());
  Eigen::SelfAdjointEigenSolver<Sq> eig(k);
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    const Map s(x.col(j).data(), k, k);
    const Map w(v.col(j).data(), k, k);
    const Sq gram = s.transpose() * s;
    if constexpr (K == 3)
      eig.computeDirect(gram);
    else
      eig.compute(gram);
    const auto& lam = eig.eigenvalues();
    if (!(lam.minCoeff() > lam.maxCoeff() / kMaxGramCondition)) throw RankDeficient("SO(k) point is singular");
    const Sq st_w = s.transpose() * w;
    Sq c = eig.eigenvectors().transpose() * (st_w + st_w.transpose()) * eig.eigenvectors();
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) c(a, b) /= lam[a] + lam[b];
    const Sq sym = eig.eigenvectors() * c * eig.eigenvectors().transpose();
    Eigen::Map<Sq>(out.col(j).data(), k, k) = w - s * sym;
  }
  return out;
}

}  // namespace

Mat LevelSetManifold::project_tangent_columns(const Mat& x, const Mat& v) const {
  if (x.rows() != v.rows() || x.cols() != v.cols()) throw std::invalid_argument("projection shapes differ");
  if (kind_ == ManifoldKind::Sphere) {
    const Eigen::RowVectorXd sq = x.colwise().squaredNorm();
    if (x.cols() > 0 && sq.minCoeff() == 0.0) throw RankDeficient("sphere projection at the origin");
    const Eigen::RowVectorXd coef = (x.cwiseProduct(v).colwise().sum().array() / sq.array()).matrix();
    return v - x * coef.asDiagonal();
  }
  if (kind_ == ManifoldKind::SpecialOrthogonal && so_order_ == 3) return project_so_columns<3>(x, v);
  if (kind_ == ManifoldKind::SpecialOrthogonal) return project_so_columns<Eigen::Dynamic>(x, v, so_order_);
  Mat out(v.rows(), v.cols());
  for (Eigen::Index j = 0; j < v.cols(); ++j) out.col(j) = project_tangent(x.col(j), v.col(j));
  return out;
}

std::string LevelSetManifold::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case ManifoldKind::Sphere: os << "sphere S^" << d_; break;
    case ManifoldKind::SpecialOrthogonal: os << "SO(" << so_order_ << ")"; break;
    case ManifoldKind::Dihedral: os << "dihedral(" << n_ / 3 << " atoms)"; break;
    case ManifoldKind::Generic: os << "generic"; break;
  }
  os << " n=" << n_ << " d=" << d_;
  return os.str();
}

namespace {

void check_gram_conditioning(const Mat& j) {
  const Mat gram = j.transpose() * j;
  Eigen::SelfAdjointEigenSolver<Mat> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kMaxGramCondition)
    throw RankDeficient("constraint Jacobian is rank deficient");
}

}  // namespace

Mat projection_matrix(const LevelSetManifold& m, const Vec& x) {
  const Mat j = m.jacobian(x);
  check_gram_conditioning(j);
  const Mat gram = j.transpose() * j;
  const Mat p = Mat::Identity(m.ambient_dim(), m.ambient_dim()) - j * gram.ldlt().solve(j.transpose());
  // Symmetrize away rounding so P == P^T exactly.
  return 0.5 * (p + p.transpose());
}

TangentBasis tangent_basis(const LevelSetManifold& m, const Vec& x) {
  const Mat p = projection_matrix(m, x);
  Eigen::JacobiSVD<Mat> svd(p, Eigen::ComputeFullU);
  const auto& sv = svd.singularValues();
  const int d = m.intrinsic_dim();
  int kept = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > 0.5) ++kept;
  if (kept != d) throw RankDeficient("projection rank differs from the intrinsic dimension");
  // Singular values come sorted in decreasing order.
  return {x, svd.matrixU().leftCols(d)};
}

TangentVector tangent_from_ambient(const LevelSetManifold& m, const Vec& x, const Vec& z) {
  return {x, m.project_tangent(x, z)};
}

TangentVector sample_tangent_gaussian(const LevelSetManifold& m, const Vec& x, Rng& rng) {
  return tangent_from_ambient(m, x, rng.normal_vector(m.ambient_dim()));
}

double basis_overlap_logdet(const TangentBasis& a, const TangentBasis& b) {
  if (a.columns.cols() != b.columns.cols())
    throw std::invalid_argument("tangent bases have different dimensions");
  const Mat overlap = a.columns.transpose() * b.columns;
  const double det = overlap.fullPivLu().determinant();
  if (det == 0.0) return kLogZero;
  return std::log(std::abs(det));
}

Mat matrix_exponential_skew(const Mat& w) {
  if (w.rows() != w.cols()) throw NotSkew("matrix is not square");
  const double asym = (w + w.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * std::max(1.0, w.cwiseAbs().maxCoeff()))
    throw NotSkew("matrix is not skew-symmetric");
  const double norm = w.norm();
  if (norm > 10.0) throw std::domain_error("skew matrix norm exceeds 10");

  int squarings = 0;
  double scaled = norm;
  while (scaled > 0.5) {
    scaled *= 0.5;
    ++squarings;
  }
  const Mat a = 0.5 * (w - w.transpose()) * std::ldexp(1.0, -squarings);
  const Eigen::Index k = w.rows();
  Mat result = Mat::Identity(k, k);
  Mat term = Mat::Identity(k, k);
  for (int i = 1; i <= 12; ++i) {
    term = term * a / static_cast<double>(i);
    result += term;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

LevelSetManifold sphere(int n) {
  if (n < 2) throw std::invalid_argument("sphere needs ambient dimension >= 2");
  return LevelSetManifold(
      ManifoldKind::Sphere, n, n - 1,
      [](const Vec& x) { return Vec::Constant(1, x.norm() - 1.0); },
      [](const Vec& x) -> Mat {
        const double r = x.norm();
        if (r == 0.0) throw RankDeficient("sphere Jacobian at the origin");
        return x / r;
      });
}

Mat as_square(const Vec& x, int k) {
  Mat s(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) s(i, j) = x[i * k + j];
  return s;
}

Vec flatten(const Mat& s) {
  const auto k = s.rows();
  Vec x(k * s.cols());
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < s.cols(); ++j) x[i * s.cols() + j] = s(i, j);
  return x;
}

LevelSetManifold special_orthogonal(int k) {
  if (k < 2) throw std::invalid_argument("SO(k) needs k >= 2");
  const int n = k * k;
  const int codim = k * (k + 1) / 2;
  auto constraint = [k, codim](const Vec& x) {
    const Mat s = as_square(x, k);
    const Mat g = s.transpose() * s - Mat::Identity(k, k);
    Vec out(codim);
    int r = 0;
    for (int a = 0; a < k; ++a)
      for (int b = a; b < k; ++b) out[r++] = g(a, b);
    return out;
  };
  // d(S^T S - I)_{ab} / dS_{ij} = delta_{jb} S_{ia} + delta_{ja} S_{ib}
  auto jacobian = [k, n, codim](const Vec& x) {
    Mat j = Mat::Zero(n, codim);
    int r = 0;
    for (int a = 0; a < k; ++a) {
      for (int b = a; b < k; ++b) {
        for (int i = 0; i < k; ++i) {
          j(i * k + b, r) += x[i * k + a];
          j(i * k + a, r) += x[i * k + b];
        }
        ++r;
      }
    }
    return j;
  };
  LevelSetManifold m(ManifoldKind::SpecialOrthogonal, n, n - codim, constraint, jacobian);
  m.so_order_ = k;
  return m;
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a, two_pi);
  if (r > std::numbers::pi) r -= two_pi;
  if (r <= -std::numbers::pi) r += two_pi;
  return r;
}

namespace {

Vec3 atom(const Vec& x, int i) { return x.segment<3>(3 * i); }

}  // namespace

double dihedral_angle(const Vec& x, const std::array<int, 4>& idx) {
  const Vec3 b1 = atom(x, idx[1]) - atom(x, idx[0]);
  const Vec3 b2 = atom(x, idx[2]) - atom(x, idx[1]);
  const Vec3 b3 = atom(x, idx[3]) - atom(x, idx[2]);
  const Vec3 n1 = b1.cross(b2);
  const Vec3 n2 = b2.cross(b3);
  // IUPAC sign: positive for a clockwise turn seen along b2.
  return std::atan2(b2.norm() * b1.dot(n2), n1.dot(n2));
}

Vec dihedral_gradient(const Vec& x, const std::array<int, 4>& idx) {
  const Vec3 f = atom(x, idx[0]) - atom(x, idx[1]);
  const Vec3 g = atom(x, idx[1]) - atom(x, idx[2]);
  const Vec3 h = atom(x, idx[3]) - atom(x, idx[2]);
  const Vec3 a = f.cross(g);
  const Vec3 b = h.cross(g);
  const double a2 = a.squaredNorm();
  const double b2 = b.squaredNorm();
  const double gn = g.norm();
  if (a2 == 0.0 || b2 == 0.0 || gn == 0.0) throw RankDeficient("colinear dihedral atoms");
  const Vec3 d0 = -gn / a2 * a;
  const Vec3 d3 = gn / b2 * b;
  const double fg = f.dot(g) / (a2 * gn);
  const double hg = h.dot(g) / (b2 * gn);
  const Vec3 d1 = -d0 + fg * a - hg * b;
  const Vec3 d2 = -fg * a + hg * b - d3;
  Vec grad = Vec::Zero(x.size());
  grad.segment<3>(3 * idx[0]) += d0;
  grad.segment<3>(3 * idx[1]) += d1;
  grad.segment<3>(3 * idx[2]) += d2;
  grad.segment<3>(3 * idx[3]) += d3;
  return grad;
}

LevelSetManifold dihedral(int atoms, const std::array<int, 4>& indices, double phi0) {
  if (atoms < 4) throw std::invalid_argument("dihedral manifold needs at least 4 atoms");
  for (int i = 0; i < 4; ++i) {
    if (indices[i] < 0 || indices[i] >= atoms)
      throw std::invalid_argument("dihedral atom index out of range");
    for (int j = 0; j < i; ++j)
      if (indices[i] == indices[j]) throw std::invalid_argument("dihedral atom indices repeat");
  }
  auto constraint = [indices, phi0](const Vec& x) {
    return Vec::Constant(1, wrap_angle(dihedral_angle(x, indices) - phi0));
  };
  auto jacobian = [indices](const Vec& x) -> Mat { return dihedral_gradient(x, indices); };
  LevelSetManifold m(ManifoldKind::Dihedral, 3 * atoms, 3 * atoms - 1, constraint, jacobian);
  m.dihedral_ = DihedralSpec{atoms, indices, phi0};
  return m;
}

double jacobian_fd_error(const LevelSetManifold& m, const Vec& x, double step) {
  const Mat analytic = m.jacobian(x);
  Mat fd(analytic.rows(), analytic.cols());
  Vec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + step;
    const Vec up = m.constraint(xp);
    xp[i] = x[i] - step;
    const Vec dn = m.constraint(xp);
    xp[i] = x[i];
    fd.row(i) = ((up - dn) / (2.0 * step)).transpose();
  }
  return (fd - analytic).norm() / std::max(analytic.norm(), 1e-300);
}

LevelSetManifold generic(int n, int d, LevelSetManifold::ConstraintFn constraint,
                         LevelSetManifold::JacobianFn jacobian, std::span<const Vec> probe_points) {
  LevelSetManifold m(ManifoldKind::Generic, n, d, std::move(constraint), std::move(jacobian));
  for (const Vec& p : probe_points) {
    const Mat j = m.jacobian(p);
    if (j.rows() != n || j.cols() != n - d)
      throw JacobianMismatch("Jacobian has the wrong shape");
    if (jacobian_fd_error(m, p) > 1e-5)
      throw JacobianMismatch("Jacobian disagrees with finite differences of the constraint");
  }
  return m;
}

}  // namespace rddpm
