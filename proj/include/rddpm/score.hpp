#pragma once

#include "rddpm/chain.hpp"
#include "rddpm/equivariance.hpp"
#include "rddpm/model.hpp"

#include <optional>
#include <vector>

namespace rddpm {

// Network plus how its inputs and outputs relate to ambient points. With a
// reference cloud the network sees Kabsch-aligned coordinates and its output
// is rotated back (SE(3)-equivariant score); otherwise it is used directly.
class ScoreModel {
 public:
  ScoreModel(const ScoreNet& net, double horizon, std::optional<Vec> reference = std::nullopt,
             bool use_ema = false)
      : net_(&net), horizon_(horizon), reference_(std::move(reference)), use_ema_(use_ema) {}

  const ScoreNet& net() const { return *net_; }
  double horizon() const { return horizon_; }
  bool equivariant() const { return reference_.has_value(); }
  bool uses_ema() const { return use_ema_; }

  // points: n x B, times: physical t per column. Returns scores n x B.
  Mat evaluate(const Mat& points, const Vec& times) const;
  Vec evaluate(const Vec& x, double t) const;

  ScoreFn as_function() const;

  // Network-side batch: inputs plus the per-column frames for pulling back
  // score gradients.
  struct Prepared {
    Mat inputs;
    std::vector<Mat3> rotations;
  };
  Prepared prepare(const Mat& points, const Vec& times) const;
  Mat to_scores(const Prepared& prep, Mat net_out) const;
  // d loss / d net output from d loss / d score.
  Mat to_output_grad(const Prepared& prep, Mat score_grad) const;

 private:
  const ScoreNet* net_;
  double horizon_;
  std::optional<Vec> reference_;
  bool use_ema_;
};

}  // namespace rddpm
