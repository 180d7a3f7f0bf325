#include "rddpm/score.hpp"

namespace rddpm {

ScoreModel::Prepared ScoreModel::prepare(const Mat& points, const Vec& times) const {
  Prepared prep;
  const Vec t_norm = times / horizon_;
  if (!reference_) {
    prep.inputs = network_inputs(points, t_norm);
    return prep;
  }
  Mat aligned(points.rows(), points.cols());
  prep.rotations.resize(points.cols());
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    const Vec x = points.col(j);
    const Alignment a = kabsch(x, *reference_);
    aligned.col(j) = aligned_coordinates(a, x);
    prep.rotations[j] = a.rotation;
  }
  prep.inputs = network_inputs(aligned, t_norm);
  return prep;
}

Mat ScoreModel::to_scores(const Prepared& prep, Mat out) const {
  if (!reference_) return out;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    out.col(j) = rotate_atoms(prep.rotations[j].transpose(), out.col(j));
  return out;
}

Mat ScoreModel::to_output_grad(const Prepared& prep, Mat grad) const {
  if (!reference_) return grad;
  // s = R^T f  =>  dL/df = R dL/ds
  for (Eigen::Index j = 0; j < grad.cols(); ++j) grad.col(j) = rotate_atoms(prep.rotations[j], grad.col(j));
  return grad;
}

Mat ScoreModel::evaluate(const Mat& points, const Vec& times) const {
  const Prepared prep = prepare(points, times);
  return to_scores(prep, net_->forward(prep.inputs, use_ema_));
}

Vec ScoreModel::evaluate(const Vec& x, double t) const {
  return evaluate(Mat(x), Vec::Constant(1, t)).col(0);
}

ScoreFn ScoreModel::as_function() const {
  return [this](const Vec& x, double t) { return evaluate(x, t); };
}

}  // namespace rddpm
