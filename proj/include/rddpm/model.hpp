#pragma once

#include "rddpm/rng.hpp"
#include "rddpm/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace rddpm {

double silu(double z);

// MLP score network s_theta(x, t): input n + 1 (coordinates and t/T), SiLU on
// hidden layers, linear output of width n. All parameters live in one flat
// vector: per layer the weight (out x in, column-major) then the bias.
class ScoreNet {
 public:
  ScoreNet() = default;
  // Glorot-uniform hidden layers and a zero final layer.
  ScoreNet(std::vector<int> widths, Rng& rng, double ema_decay = 0.999);
  static ScoreNet zeros(std::vector<int> widths, double ema_decay = 0.999);

  // widths = {n + 1, hidden..., n}
  static std::vector<int> layout(int n, int hidden_width, int hidden_layers);

  const std::vector<int>& widths() const { return widths_; }
  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  int num_layers() const { return static_cast<int>(widths_.size()) - 1; }
  Eigen::Index num_params() const { return params_.size(); }

  Vec& params() { return params_; }
  const Vec& params() const { return params_; }
  Vec& ema() { return ema_; }
  const Vec& ema() const { return ema_; }
  double ema_decay() const { return ema_decay_; }
  void set_ema_decay(double decay) { ema_decay_ = decay; }

  Eigen::Map<const Mat> weight(int layer, bool use_ema = false) const;
  Eigen::Map<const Vec> bias(int layer, bool use_ema = false) const;
  Eigen::Map<Mat> weight(int layer, bool use_ema = false);
  Eigen::Map<Vec> bias(int layer, bool use_ema = false);
  Eigen::Index weight_offset(int layer) const { return offsets_[layer]; }

  // Activations kept for backpropagation; pre[l] and act[l] for l < L.
  struct Tape {
    Mat input;
    std::vector<Mat> pre;
    std::vector<Mat> act;
    std::vector<Mat> sigmoid;  // logistic of pre, reused by backward
  };

  // inputs: input_dim x batch. Returns output_dim x batch.
  Mat forward(const Mat& inputs, bool use_ema = false, Tape* tape = nullptr) const;

  // Adds d(sum_j <output_grad_j, out_j>)/d(live params) into grad.
  void backward(const Tape& tape, const Mat& output_grad, Vec& grad) const;

 private:
  void build_offsets();

  std::vector<int> widths_;
  std::vector<Eigen::Index> offsets_;
  Vec params_;
  Vec ema_;
  double ema_decay_ = 0.999;
};

// Stacks coordinates and normalized time into network inputs.
Mat network_inputs(const Mat& points, const Vec& t_normalized);

Vec forward_eval(const ScoreNet& net, const Vec& x, double t_normalized, bool use_ema);

// Gradient of sum_j <output_grad_j, s(x_j, t_j)> w.r.t. the live parameters.
Vec backward_accumulate(const ScoreNet& net, const Mat& points, const Vec& t_normalized,
                        const Mat& output_grad);

struct AdamState {
  long long step_count = 0;
  Vec first_moment;
  Vec second_moment;
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 10.0;

  static AdamState for_net(const ScoreNet& net);
};

// Clips the global gradient 2-norm to clip_norm, then applies one
// bias-corrected Adam update. Returns the pre-clip gradient norm.
double adam_step(AdamState& state, ScoreNet& net, Vec gradient);

// shadow <- decay * shadow + (1 - decay) * params
void ema_update(ScoreNet& net);

inline constexpr const char* kCheckpointHeader = "rddpm-ckpt v1";

void save_checkpoint(const std::filesystem::path& path, const ScoreNet& net, const AdamState& adam);

struct Checkpoint {
  ScoreNet net;
  AdamState adam;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rddpm
