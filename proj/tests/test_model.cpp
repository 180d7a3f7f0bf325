#include "rddpm/model.hpp"
#include "test_util.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace rddpm;
using namespace rddpm::testing;

namespace {

// Scalar probe loss sum_j <c_j, out_j> and its central difference.
double probe_loss(const ScoreNet& net, const Mat& in, const Mat& c) {
  return (net.forward(in).array() * c.array()).sum();
}

}  // namespace

TEST_CASE("silu values") {
  CHECK(silu(0.0) == 0.0);
  CHECK(silu(1.0) == doctest::Approx(0.7310585786300049).epsilon(1e-15));
  CHECK(silu(-30.0) == doctest::Approx(-30.0 / (1.0 + std::exp(30.0))));
}

TEST_CASE("network shapes and zero output at initialization") {
  Rng rng(1);
  const auto widths = ScoreNet::layout(3, 16, 2);
  CHECK(widths == std::vector<int>{4, 16, 16, 3});
  ScoreNet net(widths, rng);
  CHECK(net.input_dim() == 4);
  CHECK(net.output_dim() == 3);
  CHECK(net.num_params() == 4 * 16 + 16 + 16 * 16 + 16 + 16 * 3 + 3);
  CHECK(net.ema() == net.params());
  const Mat out = net.forward(rng.normal_matrix(4, 10));
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
  CHECK(forward_eval(net, Vec3(0.1, 0.2, 0.3), 0.5, true).norm() == 0.0);

  // Hidden layers follow the Glorot bound.
  const double bound = std::sqrt(6.0 / (4 + 16));
  CHECK(net.weight(0).cwiseAbs().maxCoeff() <= bound);
  CHECK(net.weight(0).cwiseAbs().maxCoeff() > 0.5 * bound);
}

TEST_CASE("identity linear layer passes coordinates through") {
  ScoreNet net = ScoreNet::zeros({4, 3});
  net.weight(0).leftCols(3) = Mat::Identity(3, 3);
  const Vec3 x(0.3, -1.2, 2.5);
  CHECK((forward_eval(net, x, 0.7, false) - x).norm() == 0.0);
}

TEST_CASE("backprop: zero output gradient and linear closed form") {
  Rng rng(2);
  ScoreNet net(ScoreNet::layout(3, 8, 2), rng);
  net.params() = rng.normal_vector(net.num_params());
  const Mat pts = rng.normal_matrix(3, 5);
  const Vec t = Vec::Constant(5, 0.4);
  CHECK(backward_accumulate(net, pts, t, Mat::Zero(3, 5)).norm() == 0.0);

  // One linear layer, one sample: grad of 1/2 |W u - y|^2 w.r.t. W is (W u - y) u^T.
  ScoreNet lin = ScoreNet::zeros({4, 3});
  lin.params() = rng.normal_vector(lin.num_params());
  const Vec3 x(0.5, -0.4, 1.1);
  const Vec y = rng.normal_vector(3);
  Vec u(4);
  u << x, 0.25;
  const Vec r = lin.forward(u).col(0) - y;
  const Vec g = backward_accumulate(lin, x, Vec::Constant(1, 0.25), r);
  const Mat gw = Eigen::Map<const Mat>(g.data(), 3, 4);
  CHECK((gw - r * u.transpose()).norm() < 1e-14);
  CHECK((g.tail(3) - r).norm() < 1e-14);
}

TEST_CASE("backprop matches central differences") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    ScoreNet net({4, 8, 4}, rng);
    net.params() = 0.7 * rng.normal_vector(net.num_params());
    const Mat in = rng.normal_matrix(4, 6);
    const Mat c = rng.normal_matrix(4, 6);
    ScoreNet::Tape tape;
    net.forward(in, false, &tape);
    Vec grad = Vec::Zero(net.num_params());
    net.backward(tape, c, grad);
    // A 10-parameter probe set plus the full vector norm.
    Vec fd(net.num_params());
    for (Eigen::Index i = 0; i < net.num_params(); ++i) {
      const double h = 1e-6;
      ScoreNet a = net, b = net;
      a.params()[i] += h;
      b.params()[i] -= h;
      fd[i] = (probe_loss(a, in, c) - probe_loss(b, in, c)) / (2 * h);
    }
    for (int p = 0; p < 10; ++p) {
      const auto i = static_cast<Eigen::Index>(rng.uniform() * net.num_params());
      CHECK(std::abs(grad[i] - fd[i]) <= 1e-4 * std::max(1.0, std::abs(fd[i])));
    }
    CHECK((grad - fd).norm() <= 1e-4 * fd.norm());
  }
}

TEST_CASE("adam step rules") {
  ScoreNet net = ScoreNet::zeros({1, 1});
  net.params() << 0.5, -0.25;
  AdamState st = AdamState::for_net(net);
  const Vec before = net.params();
  adam_step(st, net, Vec::Zero(2));
  CHECK(net.params() == before);
  CHECK(st.step_count == 1);

  // Bias-corrected first step with constant unit gradient moves each
  // parameter by lr / (1 + eps).
  AdamState fresh = AdamState::for_net(net);
  const Vec start = net.params();
  adam_step(fresh, net, Vec::Ones(2));
  const double move = 5e-4 / (1.0 + 1e-8);
  CHECK((start - net.params() - Vec::Constant(2, move)).norm() < 1e-15);

  // Gradient norm 20 with clip 10 is halved before the moments.
  AdamState clip = AdamState::for_net(net);
  Vec g(2);
  g << 12.0, 16.0;
  const double norm = adam_step(clip, net, g);
  CHECK(norm == doctest::Approx(20.0));
  CHECK(clip.first_moment[0] == doctest::Approx(0.1 * 6.0));
  CHECK(clip.first_moment[1] == doctest::Approx(0.1 * 8.0));
  CHECK(clip.second_moment[1] == doctest::Approx(0.001 * 64.0));
}

TEST_CASE("EMA recursion") {
  ScoreNet net = ScoreNet::zeros({2, 2});
  net.params().setConstant(1.5);
  net.ema().setConstant(1.5);
  ema_update(net);
  CHECK((net.ema() - net.params()).norm() == 0.0);

  net.ema().setConstant(-2.0);
  const int k = 250;
  for (int i = 0; i < k; ++i) ema_update(net);
  const double expect = 1.5 + (-2.0 - 1.5) * std::pow(0.999, k);
  CHECK((net.ema() - Vec::Constant(net.num_params(), expect)).cwiseAbs().maxCoeff() < 1e-12);

  net.set_ema_decay(0.0);
  net.params().setConstant(4.0);
  ema_update(net);
  CHECK(net.ema() == net.params());
}

TEST_CASE("training updates are deterministic") {
  auto run = [] {
    Rng rng(9);
    ScoreNet net(ScoreNet::layout(2, 8, 2), rng);
    AdamState st = AdamState::for_net(net);
    for (int i = 0; i < 100; ++i) {
      const Mat pts = rng.normal_matrix(2, 4);
      const Vec t = Vec::Constant(4, rng.uniform());
      adam_step(st, net, backward_accumulate(net, pts, t, rng.normal_matrix(2, 4)));
      ema_update(net);
    }
    return net;
  };
  const ScoreNet a = run(), b = run();
  CHECK(a.params() == b.params());
  CHECK(a.ema() == b.ema());
  CHECK(a.params().allFinite());
}

TEST_CASE("checkpoint round trip is exact") {
  Rng rng(10);
  ScoreNet net(ScoreNet::layout(3, 6, 2), rng, 0.995);
  net.params() = rng.normal_vector(net.num_params());
  net.ema() = rng.normal_vector(net.num_params());
  AdamState st = AdamState::for_net(net);
  for (int i = 0; i < 3; ++i) adam_step(st, net, rng.normal_vector(net.num_params()));
  const auto path = std::filesystem::temp_directory_path() / "rddpm_ckpt_test.txt";
  save_checkpoint(path, net, st);
  {
    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    CHECK(header == kCheckpointHeader);
  }
  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.net.widths() == net.widths());
  CHECK(ck.net.params() == net.params());
  CHECK(ck.net.ema() == net.ema());
  CHECK(ck.net.ema_decay() == 0.995);
  CHECK(ck.adam.step_count == 3);
  CHECK(ck.adam.first_moment == st.first_moment);
  CHECK(ck.adam.second_moment == st.second_moment);
  CHECK(ck.adam.learning_rate == st.learning_rate);

  std::ofstream(path) << "not a checkpoint\n";
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}
