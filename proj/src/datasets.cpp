#include "rddpm/datasets.hpp"

#include "rddpm/equivariance.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace rddpm {

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

std::vector<Vec> Dataset::subset(Split s) const {
  std::vector<Vec> out;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (i < split_labels.size() && split_labels[i] == s) out.push_back(points[i]);
  return out;
}

Mat haar_orthogonal(int k, Rng& rng) {
  if (k < 1) throw std::invalid_argument("haar_orthogonal needs k >= 1");
  if (k == 1) return Mat::Identity(1, 1);
  const Mat z = rng.normal_matrix(k, k);
  Eigen::HouseholderQR<Mat> qr(z);
  Mat q = qr.householderQ() * Mat::Identity(k, k);
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < k; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  if (q.determinant() < 0.0) q.col(0) *= -1.0;
  return q;
}

Vec uniform_sphere(int n, Rng& rng) {
  for (;;) {
    Vec z = rng.normal_vector(n);
    const double r = z.norm();
    if (r > 1e-300) return z / r;
  }
}

double log_sphere_area(int n) {
  // |S^{n-1}| = 2 pi^{n/2} / Gamma(n/2)
  return std::log(2.0) + 0.5 * n * std::log(std::numbers::pi) - std::lgamma(0.5 * n);
}

Mat so_block_center(int k, int i) {
  if (i < 1 || i > std::max(1, k / 2)) throw BadModeCount("block center index out of range");
  const double c = std::cos(std::numbers::pi / 3.0);
  const double s = std::sin(std::numbers::pi / 3.0);
  Mat x = Mat::Identity(k, k);
  for (int b = 0; b < i; ++b) {
    x(2 * b, 2 * b) = c;
    x(2 * b, 2 * b + 1) = s;
    x(2 * b + 1, 2 * b) = -s;
    x(2 * b + 1, 2 * b + 1) = c;
  }
  return x;
}

Mat sample_wrapped_normal(const Mat& center, double y_std, Rng& rng) {
  const int k = static_cast<int>(center.rows());
  if (y_std == 0.0) return center;
  static thread_local std::map<int, LevelSetManifold> cache;
  auto it = cache.find(k);
  if (it == cache.end()) it = cache.emplace(k, special_orthogonal(k)).first;
  const Vec y = y_std * sample_tangent_gaussian(it->second, flatten(center), rng).vec;
  Mat w = center.transpose() * as_square(y, k);
  w = 0.5 * (w - w.transpose());
  return center * matrix_exponential_skew(w);
}

SoMixture wrapped_normal_so(int k, int m_modes, double y_std, int count, Rng& rng) {
  const int max_modes = k == 3 ? std::max(1, m_modes) : k / 2;
  if (k < 2 || m_modes < 1 || m_modes > max_modes) throw BadModeCount("invalid number of SO(k) modes");
  SoMixture mix;
  for (int i = 1; i <= m_modes; ++i) {
    const Mat q = haar_orthogonal(k, rng);
    const Mat x = so_block_center(k, k == 3 ? 1 : i);
    mix.centers.push_back(q.transpose() * x * q);
  }
  mix.data.provenance = "so_mixture k=" + std::to_string(k) + " m=" + std::to_string(m_modes);
  for (int j = 0; j < count; ++j) {
    const int mode = std::min(m_modes - 1, static_cast<int>(rng.uniform() * m_modes));
    mix.modes.push_back(mode);
    mix.data.points.push_back(flatten(sample_wrapped_normal(mix.centers[mode], y_std, rng)));
  }
  return mix;
}

int nearest_center(const Mat& s, const std::vector<Mat>& centers) {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const double d = (s - centers[i]).norm();
    if (d < best_dist) {
      best_dist = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

double vmf_log_density(const Vec& x, const Vec& mu, double kappa) {
  const int n = static_cast<int>(x.size());
  if (kappa == 0.0) return -log_sphere_area(n);
  const double cosine = mu.dot(x);
  if (n == 3)
    return std::log(kappa) - std::log(2.0 * std::numbers::pi) - std::log1p(-std::exp(-2.0 * kappa)) +
           kappa * (cosine - 1.0);
  const double nu = 0.5 * n - 1.0;
  return nu * std::log(kappa) - 0.5 * n * std::log(2.0 * std::numbers::pi) -
         std::log(std::cyl_bessel_i(nu, kappa)) + kappa * cosine;
}

namespace {

double sample_beta(double a, double b, Rng& rng) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng.engine());
  const double y = gb(rng.engine());
  return x / (x + y);
}

}  // namespace

Vec sample_vmf(const Vec& mu, double kappa, Rng& rng) {
  const int n = static_cast<int>(mu.size());
  const double m1 = n - 1.0;
  double w;
  if (kappa == 0.0) {
    w = 1.0 - 2.0 * sample_beta(0.5 * m1, 0.5 * m1, rng);
  } else {
    const double b = (-2.0 * kappa + std::sqrt(4.0 * kappa * kappa + m1 * m1)) / m1;
    const double x0 = (1.0 - b) / (1.0 + b);
    const double c = kappa * x0 + m1 * std::log(1.0 - x0 * x0);
    for (;;) {
      const double z = sample_beta(0.5 * m1, 0.5 * m1, rng);
      w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
      const double u = rng.uniform();
      if (kappa * w + m1 * std::log(1.0 - x0 * w) - c >= std::log(u)) break;
    }
  }
  Vec v;
  do {
    v = rng.normal_vector(n);
    v -= mu * mu.dot(v);
  } while (v.norm() < 1e-12);
  return w * mu + std::sqrt(std::max(0.0, 1.0 - w * w)) * v.normalized();
}

double VmfMixture::log_density(const Vec& x) const {
  double total = 0.0;
  for (double w : weights) total += w;
  double hi = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    terms.push_back(std::log(weights[i] / total) + vmf_log_density(x, centers[i], kappa));
    hi = std::max(hi, terms.back());
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - hi);
  return hi + std::log(s);
}

Vec VmfMixture::sample(Rng& rng) const {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  std::size_t i = 0;
  for (; i + 1 < centers.size(); ++i) {
    if (u < weights[i]) break;
    u -= weights[i];
  }
  return sample_vmf(centers[i], kappa, rng);
}

Dataset vmf_mixture_sphere(const VmfMixture& mixture, int count, Rng& rng) {
  if (mixture.centers.empty() || mixture.centers.size() != mixture.weights.size())
    throw std::invalid_argument("vMF mixture needs one weight per center");
  Dataset ds;
  ds.provenance = "vmf mixture kappa=" + std::to_string(mixture.kappa);
  for (int i = 0; i < count; ++i) ds.points.push_back(mixture.sample(rng));
  return ds;
}

Vec latlon_to_xyz(double lat_deg, double lon_deg) {
  const double lat = lat_deg * std::numbers::pi / 180.0;
  const double lon = lon_deg * std::numbers::pi / 180.0;
  Vec x(3);
  x << std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat);
  if (lat_deg == 90.0 || lat_deg == -90.0) x << 0.0, 0.0, lat_deg > 0 ? 1.0 : -1.0;
  return x;
}

void xyz_to_latlon(const Vec& x, double& lat_deg, double& lon_deg) {
  const Vec u = x.normalized();
  lat_deg = std::asin(std::clamp(u[2], -1.0, 1.0)) * 180.0 / std::numbers::pi;
  lon_deg = std::atan2(u[1], u[0]) * 180.0 / std::numbers::pi;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& v) {
  std::size_t pos = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    return false;
  }
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  return pos == s.size();
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

LatLonLoad load_latlon_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw IoError("empty CSV " + path.string());
  strip_cr(line);
  const auto header = split_csv(line);
  if (header.size() < 2 || header[0] != "lat" || header[1] != "lon")
    throw IoError("expected header 'lat,lon' in " + path.string());
  LatLonLoad out;
  out.data.provenance = "csv " + path.string();
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    double lat = 0.0, lon = 0.0;
    if (cells.size() < 2 || !parse_double(cells[0], lat) || !parse_double(cells[1], lon) ||
        !std::isfinite(lat) || !std::isfinite(lon) || lat < -90.0 || lat > 90.0 || lon < -360.0 ||
        lon > 360.0) {
      out.rejected_lines.push_back(line_no);
      continue;
    }
    out.data.points.push_back(latlon_to_xyz(lat, lon));
  }
  return out;
}

void standard_split(Dataset& ds, std::uint64_t seed, double val_fraction, double test_fraction) {
  if (!(val_fraction >= 0.0) || !(test_fraction >= 0.0) || val_fraction + test_fraction >= 1.0)
    throw std::invalid_argument("split fractions must be nonnegative and sum below 1");
  const std::size_t n = ds.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = std::min(i - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(i)));
    std::swap(order[i - 1], order[j]);
  }
  const auto count_of = [n](double f) {
    return static_cast<std::size_t>(std::llround(static_cast<double>(n) * f));
  };
  const std::size_t n_val = count_of(val_fraction);
  const std::size_t n_test = count_of(test_fraction);
  ds.split_labels.assign(n, Split::Train);
  for (std::size_t r = 0; r < n_val; ++r) ds.split_labels[order[r]] = Split::Val;
  for (std::size_t r = n_val; r < n_val + n_test; ++r) ds.split_labels[order[r]] = Split::Test;
}

int reassign_isolated(Dataset& ds, int lat_bins, int lon_bins) {
  if (lat_bins < 1 || lon_bins < 1) throw std::invalid_argument("bin counts must be positive");
  auto bin_of = [&](const Vec& x) {
    double lat = 0.0, lon = 0.0;
    xyz_to_latlon(x, lat, lon);
    const int bi = std::clamp(static_cast<int>((lat + 90.0) / 180.0 * lat_bins), 0, lat_bins - 1);
    const int bj = std::clamp(static_cast<int>((lon + 180.0) / 360.0 * lon_bins), 0, lon_bins - 1);
    return static_cast<long long>(bi) * lon_bins + bj;
  };
  std::map<long long, int> occupancy;
  std::vector<long long> bins(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    bins[i] = bin_of(ds.points[i]);
    ++occupancy[bins[i]];
  }
  int moved = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.split_labels[i] != Split::Train && occupancy[bins[i]] == 1) {
      ds.split_labels[i] = Split::Train;
      ++moved;
    }
  }
  return moved;
}

int split_with_isolated_reassignment(Dataset& ds, std::uint64_t seed, int lat_bins, int lon_bins,
                                     double val_fraction, double test_fraction) {
  standard_split(ds, seed, val_fraction, test_fraction);
  return reassign_isolated(ds, lat_bins, lon_bins);
}

void refine_dataset(Dataset& ds, const LevelSetManifold& m, const RefineConfig& cfg) {
  for (Vec& p : ds.points) p = refine_to_manifold(m, p, cfg);
}

Vec dihedral_reference_cloud(const LevelSetManifold& m, Rng& rng) {
  if (!m.dihedral_spec()) throw std::invalid_argument("reference cloud needs a dihedral manifold");
  const int atoms = m.dihedral_spec()->atoms;
  for (int attempt = 0; attempt < 100; ++attempt) {
    Vec x(3 * atoms);
    Vec3 pos = Vec3::Zero();
    Vec3 prev_dir = Vec3::UnitX();
    for (int i = 0; i < atoms; ++i) {
      x.segment<3>(3 * i) = pos;
      Vec3 dir;
      do {
        dir = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
      } while (std::abs(dir.dot(prev_dir)) > 0.8);
      pos += 1.5 * dir;
      prev_dir = dir;
    }
    try {
      const Vec refined = refine_to_manifold(m, x, {0.1, 1e-10, 1e4});
      kabsch(refined, refined);
      return refined;
    } catch (const Error&) {
      continue;
    }
  }
  throw NoConvergence("could not build a dihedral reference cloud");
}

Dataset dihedral_toy(const LevelSetManifold& m, const Vec& reference, double noise, int count, Rng& rng) {
  Dataset ds;
  ds.provenance = "dihedral toy";
  while (static_cast<int>(ds.points.size()) < count) {
    const Vec x = reference + noise * rng.normal_vector(reference.size());
    try {
      ds.points.push_back(refine_to_manifold(m, x, {0.1, 1e-8, 1e4}));
    } catch (const Error&) {
    }
  }
  return ds;
}

void write_points_csv(const std::filesystem::path& path, const std::vector<Vec>& points, int columns) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  const Eigen::Index n = columns >= 0 ? columns : (points.empty() ? 0 : points.front().size());
  for (Eigen::Index j = 0; j < n; ++j) os << (j ? "," : "") << 'x' << j;
  os << '\n' << std::setprecision(17);
  for (const Vec& p : points) {
    for (Eigen::Index j = 0; j < p.size(); ++j) os << (j ? "," : "") << p[j];
    os << '\n';
  }
  if (!os) throw IoError("failed writing " + path.string());
}

std::vector<Vec> read_points_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<Vec> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    Vec p(static_cast<Eigen::Index>(cells.size()));
    bool numeric = true;
    for (std::size_t j = 0; j < cells.size() && numeric; ++j) numeric = parse_double(cells[j], p[j]);
    if (!numeric) {
      if (line_no == 1) continue;  // header
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": non-numeric row");
    }
    if (!out.empty() && p.size() != out.front().size())
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": inconsistent column count");
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace rddpm
