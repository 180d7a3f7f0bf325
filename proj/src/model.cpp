#include "rddpm/model.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace rddpm {

double silu(double z) { return z / (1.0 + std::exp(-z)); }

std::vector<int> ScoreNet::layout(int n, int hidden_width, int hidden_layers) {
  std::vector<int> w{n + 1};
  for (int i = 0; i < hidden_layers; ++i) w.push_back(hidden_width);
  w.push_back(n);
  return w;
}

void ScoreNet::build_offsets() {
  if (widths_.size() < 2) throw std::invalid_argument("network needs at least one layer");
  for (int w : widths_)
    if (w <= 0) throw std::invalid_argument("layer widths must be positive");
  offsets_.clear();
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(widths_[l + 1]) * widths_[l] + widths_[l + 1];
  }
  params_ = Vec::Zero(total);
  ema_ = Vec::Zero(total);
}

ScoreNet ScoreNet::zeros(std::vector<int> widths, double ema_decay) {
  ScoreNet net;
  net.widths_ = std::move(widths);
  net.ema_decay_ = ema_decay;
  net.build_offsets();
  return net;
}

ScoreNet::ScoreNet(std::vector<int> widths, Rng& rng, double ema_decay)
    : widths_(std::move(widths)), ema_decay_(ema_decay) {
  build_offsets();
  for (int l = 0; l + 1 < num_layers(); ++l) {
    const double limit = std::sqrt(6.0 / (widths_[l] + widths_[l + 1]));
    auto w = weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = limit * (2.0 * rng.uniform() - 1.0);
  }
  ema_ = params_;
}

Eigen::Map<const Mat> ScoreNet::weight(int l, bool use_ema) const {
  const Vec& p = use_ema ? ema_ : params_;
  return {p.data() + offsets_[l], widths_[l + 1], widths_[l]};
}

Eigen::Map<const Vec> ScoreNet::bias(int l, bool use_ema) const {
  const Vec& p = use_ema ? ema_ : params_;
  return {p.data() + offsets_[l] + static_cast<Eigen::Index>(widths_[l + 1]) * widths_[l], widths_[l + 1]};
}

Eigen::Map<Mat> ScoreNet::weight(int l, bool use_ema) {
  Vec& p = use_ema ? ema_ : params_;
  return {p.data() + offsets_[l], widths_[l + 1], widths_[l]};
}

Eigen::Map<Vec> ScoreNet::bias(int l, bool use_ema) {
  Vec& p = use_ema ? ema_ : params_;
  return {p.data() + offsets_[l] + static_cast<Eigen::Index>(widths_[l + 1]) * widths_[l], widths_[l + 1]};
}

Mat ScoreNet::forward(const Mat& inputs, bool use_ema, Tape* tape) const {
  if (inputs.rows() != input_dim()) throw std::invalid_argument("network input has the wrong width");
  const int layers = num_layers();
  if (tape) {
    tape->input = inputs;
    tape->pre.resize(layers - 1);
    tape->act.resize(layers - 1);
    tape->sigmoid.resize(layers - 1);
  }
  Mat a = inputs;
  Mat z, s;
  for (int l = 0; l < layers; ++l) {
    z.noalias() = weight(l, use_ema) * a;
    z.colwise() += bias(l, use_ema);
    if (l + 1 == layers) return z;
    // Vectorized logistic; exp(-z) overflows to inf for very negative z, which gives s = 0.
    s = (1.0 + (-z.array()).exp()).inverse().matrix();
    a = z.cwiseProduct(s);
    if (tape) {
      tape->pre[l] = z;
      tape->act[l] = a;
      tape->sigmoid[l] = s;
    }
  }
  return a;
}

void ScoreNet::backward(const Tape& tape, const Mat& output_grad, Vec& grad) const {
  if (grad.size() != num_params()) grad = Vec::Zero(num_params());
  const int layers = num_layers();
  Mat dz = output_grad;
  for (int l = layers - 1; l >= 0; --l) {
    const Mat& a_in = l == 0 ? tape.input : tape.act[l - 1];
    const Eigen::Index rows = widths_[l + 1];
    const Eigen::Index cols = widths_[l];
    Eigen::Map<Mat> gw(grad.data() + offsets_[l], rows, cols);
    Eigen::Map<Vec> gb(grad.data() + offsets_[l] + rows * cols, rows);
    gw.noalias() += dz * a_in.transpose();
    gb += dz.rowwise().sum();
    if (l == 0) break;
    // silu'(z) = s (1 + z (1 - s)).
    const Mat& z = tape.pre[l - 1];
    const Mat& s = tape.sigmoid[l - 1];
    Mat da = weight(l).transpose() * dz;
    dz = (da.array() * s.array() * (1.0 + z.array() * (1.0 - s.array()))).matrix();
  }
}

Mat network_inputs(const Mat& points, const Vec& t_normalized) {
  if (t_normalized.size() != points.cols()) throw std::invalid_argument("one time per point required");
  Mat in(points.rows() + 1, points.cols());
  in.topRows(points.rows()) = points;
  in.row(points.rows()) = t_normalized.transpose();
  return in;
}

Vec forward_eval(const ScoreNet& net, const Vec& x, double t_normalized, bool use_ema) {
  return net.forward(network_inputs(x, Vec::Constant(1, t_normalized)), use_ema).col(0);
}

Vec backward_accumulate(const ScoreNet& net, const Mat& points, const Vec& t_normalized,
                        const Mat& output_grad) {
  ScoreNet::Tape tape;
  net.forward(network_inputs(points, t_normalized), false, &tape);
  Vec grad = Vec::Zero(net.num_params());
  net.backward(tape, output_grad, grad);
  return grad;
}

AdamState AdamState::for_net(const ScoreNet& net) {
  AdamState s;
  s.first_moment = Vec::Zero(net.num_params());
  s.second_moment = Vec::Zero(net.num_params());
  return s;
}

double adam_step(AdamState& state, ScoreNet& net, Vec gradient) {
  if (state.first_moment.size() != net.num_params()) {
    state.first_moment = Vec::Zero(net.num_params());
    state.second_moment = Vec::Zero(net.num_params());
  }
  const double norm = gradient.norm();
  if (norm > state.clip_norm) gradient *= state.clip_norm / norm;
  ++state.step_count;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * gradient;
  state.second_moment =
      state.beta2 * state.second_moment + (1.0 - state.beta2) * gradient.cwiseProduct(gradient);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  net.params().array() -= state.learning_rate * (state.first_moment.array() / c1) /
                          ((state.second_moment.array() / c2).sqrt() + state.eps);
  return norm;
}

void ema_update(ScoreNet& net) {
  net.ema() = net.ema_decay() * net.ema() + (1.0 - net.ema_decay()) * net.params();
}

namespace {

void write_tensor(std::ostream& os, const std::string& name, const double* data, Eigen::Index rows,
                  Eigen::Index cols, bool column_major) {
  os << name << ' ' << rows << ' ' << cols << '\n';
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double v = column_major ? data[j * rows + i] : data[i * cols + j];
      os << (j ? " " : "") << v;
    }
    os << '\n';
  }
}

void write_params(std::ostream& os, const std::string& prefix, const ScoreNet& net, const Vec& flat) {
  for (int l = 0; l < net.num_layers(); ++l) {
    const Eigen::Index rows = net.widths()[l + 1];
    const Eigen::Index cols = net.widths()[l];
    const double* base = flat.data() + net.weight_offset(l);
    write_tensor(os, prefix + std::to_string(l) + ".weight", base, rows, cols, true);
    write_tensor(os, prefix + std::to_string(l) + ".bias", base + rows * cols, rows, 1, true);
  }
}

struct Tensor {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<double> values;  // row-major
};

void read_params(const std::map<std::string, Tensor>& tensors, const std::string& prefix,
                 const ScoreNet& net, Vec& flat) {
  for (int l = 0; l < net.num_layers(); ++l) {
    const Eigen::Index rows = net.widths()[l + 1];
    const Eigen::Index cols = net.widths()[l];
    const auto w = tensors.find(prefix + std::to_string(l) + ".weight");
    const auto b = tensors.find(prefix + std::to_string(l) + ".bias");
    if (w == tensors.end() || b == tensors.end())
      throw IoError("checkpoint is missing tensors with prefix " + prefix);
    if (w->second.rows != rows || w->second.cols != cols || b->second.rows != rows || b->second.cols != 1)
      throw IoError("checkpoint tensor shapes disagree for " + prefix + std::to_string(l));
    double* base = flat.data() + net.weight_offset(l);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) base[j * rows + i] = w->second.values[i * cols + j];
    for (Eigen::Index i = 0; i < rows; ++i) base[rows * cols + i] = b->second.values[i];
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ScoreNet& net, const AdamState& adam) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os << std::setprecision(17);
  os << kCheckpointHeader << '\n';
  const double meta[] = {net.ema_decay()};
  write_tensor(os, "meta.ema_decay", meta, 1, 1, false);
  const double state[] = {static_cast<double>(adam.step_count), adam.learning_rate, adam.beta1,
                          adam.beta2, adam.eps, adam.clip_norm};
  write_tensor(os, "adam.state", state, 1, 6, false);
  write_params(os, "net.", net, net.params());
  write_params(os, "ema.", net, net.ema());
  Vec m = adam.first_moment.size() == net.num_params() ? adam.first_moment : Vec::Zero(net.num_params());
  Vec v = adam.second_moment.size() == net.num_params() ? adam.second_moment : Vec::Zero(net.num_params());
  write_params(os, "adam.m.", net, m);
  write_params(os, "adam.v.", net, v);
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != kCheckpointHeader)
    throw IoError("not an rddpm checkpoint: " + path.string());
  std::map<std::string, Tensor> tensors;
  std::string name;
  while (is >> name) {
    Tensor t;
    if (!(is >> t.rows >> t.cols) || t.rows < 0 || t.cols < 0)
      throw IoError("bad tensor header for " + name);
    t.values.resize(static_cast<std::size_t>(t.rows * t.cols));
    for (double& v : t.values)
      if (!(is >> v)) throw IoError("truncated tensor " + name);
    tensors[name] = std::move(t);
  }
  std::vector<int> widths;
  for (int l = 0;; ++l) {
    const auto it = tensors.find("net." + std::to_string(l) + ".weight");
    if (it == tensors.end()) break;
    if (l == 0) widths.push_back(static_cast<int>(it->second.cols));
    else if (widths.back() != it->second.cols) throw IoError("inconsistent layer widths in checkpoint");
    widths.push_back(static_cast<int>(it->second.rows));
  }
  if (widths.size() < 2) throw IoError("checkpoint holds no network layers");
  const auto meta = tensors.find("meta.ema_decay");
  const auto state = tensors.find("adam.state");
  if (meta == tensors.end() || state == tensors.end() || state->second.values.size() != 6)
    throw IoError("checkpoint is missing metadata");

  Checkpoint ck{ScoreNet::zeros(widths, meta->second.values[0]), {}};
  read_params(tensors, "net.", ck.net, ck.net.params());
  read_params(tensors, "ema.", ck.net, ck.net.ema());
  ck.adam = AdamState::for_net(ck.net);
  read_params(tensors, "adam.m.", ck.net, ck.adam.first_moment);
  read_params(tensors, "adam.v.", ck.net, ck.adam.second_moment);
  const auto& s = state->second.values;
  ck.adam.step_count = static_cast<long long>(s[0]);
  ck.adam.learning_rate = s[1];
  ck.adam.beta1 = s[2];
  ck.adam.beta2 = s[3];
  ck.adam.eps = s[4];
  ck.adam.clip_norm = s[5];
  return ck;
}

}  // namespace rddpm
