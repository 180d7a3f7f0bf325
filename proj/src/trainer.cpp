#include "rddpm/trainer.hpp"

#include "rddpm/eval.hpp"
#include "rddpm/parallel.hpp"

#include <chrono>
#include <cmath>

namespace rddpm {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (refresh_every < 1) throw std::invalid_argument("refresh_every must be >= 1");
  if (validate_every < 0) throw std::invalid_argument("validate_every must be >= 0");
  if (val_paths_per_point < 1 || nll_paths_per_point < 1)
    throw std::invalid_argument("paths per point must be >= 1");
  if (!(learning_rate > 0.0) || !(clip_norm > 0.0))
    throw std::invalid_argument("learning rate and clip norm must be positive");
  if (chunk_columns < 1) throw std::invalid_argument("chunk_columns must be >= 1");
  schedule.validate();
  newton.validate();
}

TrajectoryBuffer generate_buffer(const LevelSetManifold& m, const std::vector<Vec>& points,
                                 const NoiseSchedule& schedule, const DriftSpec& drift,
                                 const NewtonConfig& newton, std::uint64_t seed, int epoch, int threads,
                                 int max_attempts) {
  TrajectoryBuffer buf;
  buf.epoch_stamp = epoch;
  buf.trajectories.resize(points.size());
  buf.residuals.resize(points.size());
  std::vector<FailureCounter> failures(points.size());
  parallel_for(points.size(), threads, [&](std::size_t i) {
    Rng rng(derive_seed(seed, "forward", static_cast<std::uint64_t>(epoch), i));
    Trajectory traj =
        simulate_forward_retrying(m, points[i], schedule, drift, rng, newton, &failures[i], max_attempts);
    Mat res(m.ambient_dim(), schedule.N);
    for (int k = 0; k < schedule.N; ++k) {
      const Vec& xk = traj.points[k];
      const Vec& xk1 = traj.points[k + 1];
      const double beta = schedule.beta(k + 1);
      res.col(k) = m.project_tangent(xk1, xk - xk1 + beta * beta * drift_eval(drift, xk1)) / beta;
    }
    buf.trajectories[i] = std::move(traj);
    buf.residuals[i] = std::move(res);
  });
  for (const auto& f : failures) buf.failures.merge(f);
  return buf;
}

BatchLoss batch_loss(const LevelSetManifold& m, const ScoreModel& model, const TrajectoryBuffer& buffer,
                     const std::vector<std::size_t>& batch, const NoiseSchedule& schedule,
                     bool with_parameter_gradient, int chunk_columns) {
  const int n = m.ambient_dim();
  const int steps = schedule.N;
  const Eigen::Index total = static_cast<Eigen::Index>(batch.size()) * steps;
  BatchLoss out;
  out.points.resize(n, total);
  out.times.resize(total);
  out.score_gradient.resize(n, total);
  if (with_parameter_gradient) out.parameter_gradient = Vec::Zero(model.net().num_params());
  if (batch.empty()) return out;

  Mat residual(n, total);
  Vec betas(total);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& traj = buffer.trajectories.at(batch[b]);
    for (int k = 0; k < steps; ++k) {
      const Eigen::Index col = static_cast<Eigen::Index>(b) * steps + k;
      out.points.col(col) = traj.points[k + 1];
      out.times[col] = schedule.time(k + 1);
      residual.col(col) = buffer.residuals[batch[b]].col(k);
      betas[col] = schedule.beta(k + 1);
    }
  }

  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  ScoreNet::Tape tape;
  for (Eigen::Index start = 0; start < total; start += chunk_columns) {
    const Eigen::Index cols = std::min<Eigen::Index>(chunk_columns, total - start);
    const auto prep = model.prepare(out.points.middleCols(start, cols), out.times.segment(start, cols));
    const Mat raw = model.net().forward(prep.inputs, model.uses_ema(), with_parameter_gradient ? &tape : nullptr);
    const Mat scores = model.to_scores(prep, raw);
    // G = P(x)(x^(k) - x^(k+1) - beta^2 (s - b)) / beta; G is tangent, so
    // d(|G|^2/2)/ds = -beta P G = -beta G.
    const auto beta = betas.segment(start, cols);
    const Mat g = residual.middleCols(start, cols) -
                  m.project_tangent_columns(out.points.middleCols(start, cols), scores) * beta.asDiagonal();
    loss += 0.5 * g.squaredNorm();
    const Mat grad_s = g * (-inv_batch * beta).asDiagonal();
    out.score_gradient.middleCols(start, cols) = grad_s;
    if (with_parameter_gradient)
      model.net().backward(tape, model.to_output_grad(prep, grad_s), out.parameter_gradient);
  }
  out.loss = loss * inv_batch;
  return out;
}

TrainResult train(ScoreNet& net, const LevelSetManifold& m, const std::vector<Vec>& train_points,
                  const std::vector<Vec>& val_points, const TrainConfig& cfg, const DriftSpec& drift,
                  const PriorLogDensity& prior, std::optional<Vec> equivariant_reference,
                  const TrainHooks& hooks) {
  cfg.validate();
  drift.validate(m.ambient_dim());
  if (train_points.empty()) throw std::invalid_argument("no training points");
  using clock = std::chrono::steady_clock;
  const auto started = clock::now();

  TrainResult result;
  AdamState adam = AdamState::for_net(net);
  adam.learning_rate = cfg.learning_rate;
  adam.clip_norm = cfg.clip_norm;

  const ScoreModel live(net, cfg.schedule.T, equivariant_reference, false);
  const ScoreModel ema(net, cfg.schedule.T, equivariant_reference, true);
  const int validate_every = cfg.validate_every > 0 ? cfg.validate_every : cfg.refresh_every;

  TrajectoryBuffer buffer = generate_buffer(m, train_points, cfg.schedule, drift, cfg.newton, cfg.seed, 0,
                                            cfg.threads, cfg.max_attempts);
  result.forward_failures.merge(buffer.failures);

  const std::size_t count = train_points.size();
  const std::size_t batch = std::min<std::size_t>(cfg.batch_size, count);
  const std::size_t batches = std::max<std::size_t>(1, count / batch);
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  std::vector<std::size_t> indices(batch);

  const bool can_validate = !val_points.empty() && static_cast<bool>(prior);
  result.best = net;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, "batches", static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = count; i > 1; --i) {
      const auto j = std::min(i - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(i)));
      std::swap(order[i - 1], order[j]);
    }
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      std::copy(order.begin() + static_cast<std::ptrdiff_t>(b * batch),
                order.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch), indices.begin());
      BatchLoss bl = batch_loss(m, live, buffer, indices, cfg.schedule, true, cfg.chunk_columns);
      adam_step(adam, net, std::move(bl.parameter_gradient));
      ema_update(net);
      loss_sum += bl.loss;
    }
    if (!net.params().allFinite()) throw NoConvergence("network parameters became non-finite");

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);

    if (epoch % cfg.refresh_every == 0) {
      buffer = generate_buffer(m, train_points, cfg.schedule, drift, cfg.newton, cfg.seed, epoch, cfg.threads,
                               cfg.max_attempts);
      result.forward_failures.merge(buffer.failures);
    }

    if (can_validate && (epoch % validate_every == 0 || epoch == cfg.epochs)) {
      NllOptions opts;
      opts.paths_per_point = cfg.val_paths_per_point;
      opts.newton = cfg.newton;
      opts.seed = derive_seed(cfg.seed, "validation", static_cast<std::uint64_t>(epoch));
      opts.threads = cfg.threads;
      const NllEstimate est = nll(m, ema, val_points, cfg.schedule, drift, prior, opts);
      rec.val_nll = est.mean_nll;
      if (!result.best_val_nll || est.mean_nll < *result.best_val_nll) {
        result.best_val_nll = est.mean_nll;
        result.best = net;
        if (hooks.on_best) hooks.on_best(net, adam);
      }
    }
    rec.wall_seconds = std::chrono::duration<double>(clock::now() - started).count();
    result.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  if (!can_validate) {
    result.best = net;
    if (hooks.on_best) hooks.on_best(net, adam);
  }
  result.adam = adam;
  result.final_buffer = std::move(buffer);
  return result;
}

namespace {

Estimate mean_and_error(const std::vector<double>& v) {
  Estimate e;
  if (v.empty()) return e;
  double sum = 0.0;
  for (double x : v) sum += x;
  e.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - e.mean) * (x - e.mean);
    e.standard_error = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return e;
}

}  // namespace

Estimate variational_constant(const TrajectoryBuffer& buffer, const PriorLogDensity& prior) {
  std::vector<double> values;
  values.reserve(buffer.trajectories.size());
  for (const auto& traj : buffer.trajectories) {
    double sq = 0.0;
    for (const Vec& v : traj.tangent_draws) sq += v.squaredNorm();
    values.push_back(-(prior(traj.points.back()) + 0.5 * sq));
  }
  return mean_and_error(values);
}

Estimate trajectory_loss(const LevelSetManifold& m, const ScoreModel& model, const TrajectoryBuffer& buffer,
                         const NoiseSchedule& schedule) {
  std::vector<double> values;
  values.reserve(buffer.trajectories.size());
  for (std::size_t i = 0; i < buffer.trajectories.size(); ++i)
    values.push_back(batch_loss(m, model, buffer, {i}, schedule).loss);
  return mean_and_error(values);
}

}  // namespace rddpm
