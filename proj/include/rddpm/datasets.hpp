#pragma once

#include "rddpm/geometry.hpp"
#include "rddpm/solver.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rddpm {

enum class Split { Train, Val, Test };

const char* split_name(Split s);
Split parse_split(const std::string& s);

struct Dataset {
  std::vector<Vec> points;
  std::vector<Split> split_labels;  // empty until split
  std::string provenance;

  std::size_t size() const { return points.size(); }
  std::vector<Vec> subset(Split s) const;
};

// Haar-distributed element of SO(k): QR of a Gaussian matrix with the
// R-diagonal sign fix, then one column flipped if det < 0.
Mat haar_orthogonal(int k, Rng& rng);

Vec uniform_sphere(int n, Rng& rng);
double log_sphere_area(int n);

// Block-diagonal X_i: the first i blocks are the pi/3 rotation A0, the rest
// I2; odd k ends with a 1x1 identity block. Requires 1 <= i <= k/2.
Mat so_block_center(int k, int i);

struct SoMixture {
  std::vector<Mat> centers;  // S_i = Q_i^T X_i Q_i
  std::vector<int> modes;    // mode index of every sample
  Dataset data;
};

// S = S_i exp(S_i^T Y) with Y a tangent Gaussian at S_i of std y_std; modes
// equally likely. On SO(3) every mode uses X_1 with its own random Q_i.
SoMixture wrapped_normal_so(int k, int m_modes, double y_std, int count, Rng& rng);
Mat sample_wrapped_normal(const Mat& center, double y_std, Rng& rng);
int nearest_center(const Mat& s, const std::vector<Mat>& centers);

struct VmfMixture {
  std::vector<Vec> centers;  // unit vectors
  double kappa = 0.0;
  std::vector<double> weights;

  double log_density(const Vec& x) const;
  Vec sample(Rng& rng) const;
};

double vmf_log_density(const Vec& x, const Vec& mu, double kappa);
// Wood's rejection sampler.
Vec sample_vmf(const Vec& mu, double kappa, Rng& rng);
Dataset vmf_mixture_sphere(const VmfMixture& mixture, int count, Rng& rng);

Vec latlon_to_xyz(double lat_deg, double lon_deg);
void xyz_to_latlon(const Vec& x, double& lat_deg, double& lon_deg);

struct LatLonLoad {
  Dataset data;
  std::vector<std::size_t> rejected_lines;  // 1-based line numbers
};

// CSV with header `lat,lon` in degrees.
LatLonLoad load_latlon_csv(const std::filesystem::path& path);

// Shuffled split; val and test get round(n * fraction) points (80:10:10 by default).
void standard_split(Dataset& ds, std::uint64_t seed, double val_fraction = 0.1, double test_fraction = 0.1);

// standard_split, then every validation/test point that is the only point in
// its latitude/longitude bin is moved to train. Returns the number moved.
int split_with_isolated_reassignment(Dataset& ds, std::uint64_t seed, int lat_bins, int lon_bins,
                                     double val_fraction = 0.1, double test_fraction = 0.1);

// Moves isolated val/test points of an already split dataset to train.
int reassign_isolated(Dataset& ds, int lat_bins, int lon_bins);

void refine_dataset(Dataset& ds, const LevelSetManifold& m, const RefineConfig& cfg = {});

// Chain-like reference cloud with the dihedral of `indices` equal to phi0.
Vec dihedral_reference_cloud(const LevelSetManifold& m, Rng& rng);
// Reference plus isotropic noise, refined back onto the manifold.
Dataset dihedral_toy(const LevelSetManifold& m, const Vec& reference, double noise, int count, Rng& rng);

// Headered CSV of coordinates x0..x{n-1}; `columns` fixes the header width
// when there may be no rows.
void write_points_csv(const std::filesystem::path& path, const std::vector<Vec>& points, int columns = -1);
std::vector<Vec> read_points_csv(const std::filesystem::path& path);

}  // namespace rddpm
