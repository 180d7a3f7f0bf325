#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>

namespace rddpm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

// Marker for a transition density that is exactly zero (orthogonal tangent
// spaces, or a target that the projection cannot reach).
inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

// Finite stand-in for kLogZero when summing log densities.
inline constexpr double kLogZeroFloor = -1e300;

inline double floor_log(double v) { return v == kLogZero ? kLogZeroFloor : v; }

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

class NotSkew : public Error {
 public:
  using Error::Error;
};

class NoConvergence : public Error {
 public:
  using Error::Error;
};

class DegenerateCloud : public Error {
 public:
  using Error::Error;
};

class BadModeCount : public Error {
 public:
  using Error::Error;
};

class JacobianMismatch : public Error {
 public:
  using Error::Error;
};

class AbortTooManyFailures : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rddpm
