#include "rddpm/eval.hpp"

#include "rddpm/datasets.hpp"
#include "rddpm/equivariance.hpp"
#include "rddpm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

namespace rddpm {

double path_log_weight(const LevelSetManifold& m, const ScoreModel& model, const Trajectory& traj,
                       const NoiseSchedule& schedule, const DriftSpec& drift, const PriorLogDensity& prior,
                       const ReachabilityCheck& reach) {
  const int steps = schedule.N;
  const int n = m.ambient_dim();
  Mat pts(n, steps);
  Vec times(steps);
  for (int k = 0; k < steps; ++k) {
    pts.col(k) = traj.points[k + 1];
    times[k] = schedule.time(k + 1);
  }
  const Mat scores = model.evaluate(pts, times);

  double w = prior(traj.points.back());
  for (int k = 0; k < steps && std::isfinite(w); ++k) {
    const Vec& xk = traj.points[k];
    const Vec& xk1 = traj.points[k + 1];
    const double sigma = schedule.sigma(k);
    const double lq = log_forward_transition(m, xk, xk1, sigma, drift_eval(drift, xk), reach);
    const double lp = log_reverse_transition(m, xk, xk1, sigma, scores.col(k), drift_eval(drift, xk1), reach);
    // A forward step the solver produced is reachable by construction; only
    // the reverse density can vanish.
    if (!std::isfinite(lq)) continue;
    w += lp - lq;
  }
  return std::isnan(w) ? kLogZero : w;
}

NllEstimate nll(const LevelSetManifold& m, const ScoreModel& model, const std::vector<Vec>& points,
                const NoiseSchedule& schedule, const DriftSpec& drift, const PriorLogDensity& prior,
                const NllOptions& opts) {
  if (opts.paths_per_point < 1) throw std::invalid_argument("paths_per_point must be >= 1");
  schedule.validate();
  NllEstimate est;
  est.paths_per_point = opts.paths_per_point;
  est.per_point.assign(points.size(), std::numeric_limits<double>::quiet_NaN());
  est.paths_used.assign(points.size(), 0);
  std::vector<long long> failed(points.size(), 0);

  parallel_for(points.size(), opts.threads, [&](std::size_t i) {
    std::vector<double> weights;
    weights.reserve(opts.paths_per_point);
    for (int p = 0; p < opts.paths_per_point; ++p) {
      Rng rng(derive_seed(opts.seed, "nll", i, static_cast<std::uint64_t>(p)));
      const auto traj = simulate_forward(m, points[i], schedule, drift, rng, opts.newton);
      if (!traj) {
        ++failed[i];
        continue;
      }
      weights.push_back(path_log_weight(m, model, *traj, schedule, drift, prior, opts.reach));
    }
    est.paths_used[i] = static_cast<int>(weights.size());
    if (weights.empty()) return;
    const double top = *std::max_element(weights.begin(), weights.end());
    if (!std::isfinite(top)) {
      est.per_point[i] = std::numeric_limits<double>::infinity();
      return;
    }
    double acc = 0.0;
    for (double w : weights) acc += std::exp(w - top);
    est.per_point[i] = -(top + std::log(acc / static_cast<double>(weights.size())));
  });

  std::vector<double> present;
  for (std::size_t i = 0; i < points.size(); ++i) {
    est.failed_paths += failed[i];
    if (std::isnan(est.per_point[i]))
      ++est.missing_points;
    else
      present.push_back(est.per_point[i]);
  }
  if (!present.empty()) {
    double sum = 0.0;
    for (double v : present) sum += v;
    est.mean_nll = sum / static_cast<double>(present.size());
    if (present.size() > 1)
      est.standard_error = standard_deviation(present) / std::sqrt(static_cast<double>(present.size()));
  } else {
    est.mean_nll = std::numeric_limits<double>::quiet_NaN();
  }
  return est;
}

GeneratedSamples generate(const LevelSetManifold& m, const ScoreModel& model, const NoiseSchedule& schedule,
                          const DriftSpec& drift, const PriorSampler& prior, const GenerateOptions& opts) {
  if (opts.count < 0) throw std::invalid_argument("sample count must be >= 0");
  for (int k : opts.record_steps)
    if (k < 0 || k > schedule.N) throw std::invalid_argument("record step out of range");
  GeneratedSamples out;
  out.steps = opts.record_steps;
  out.by_step.assign(out.steps.size(), std::vector<Vec>(static_cast<std::size_t>(opts.count)));
  std::vector<FailureCounter> failures(static_cast<std::size_t>(opts.count));
  const ScoreFn score = model.as_function();

  parallel_for(static_cast<std::size_t>(opts.count), opts.threads, [&](std::size_t i) {
    Rng rng(derive_seed(opts.seed, "reverse", i));
    for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
      ++failures[i].attempts;
      const Vec xN = prior(rng);
      auto traj = simulate_reverse(m, xN, schedule, score, drift, rng, opts.newton);
      if (traj) {
        for (std::size_t s = 0; s < out.steps.size(); ++s) out.by_step[s][i] = traj->points[out.steps[s]];
        return;
      }
      ++failures[i].discarded;
    }
    throw AbortTooManyFailures("reverse trajectory failed " + std::to_string(opts.max_attempts) +
                               " times in a row on " + m.describe());
  });
  for (const auto& f : failures) out.failures.merge(f);
  return out;
}

HistogramSummary histogram(const std::vector<double>& values, int bins, std::string name, double lo,
                           double hi) {
  if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  HistogramSummary h;
  h.statistic_name = std::move(name);
  if (!(lo < hi)) {
    if (values.empty()) {
      lo = 0.0;
      hi = 1.0;
    } else {
      const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
      lo = *mn;
      hi = *mx;
      if (!(lo < hi)) {
        lo -= 0.5;
        hi += 0.5;
      }
    }
  }
  h.edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b) h.edges[b] = lo + (hi - lo) * b / bins;
  h.counts.assign(bins, 0);
  for (double v : values) {
    if (!(v >= lo && v <= hi)) continue;
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    h.counts[std::clamp(b, 0, bins - 1)]++;
  }
  return h;
}

double trace_power(const Mat& s, int p) {
  if (p < 1) throw std::invalid_argument("trace power must be >= 1");
  Mat acc = s;
  for (int i = 1; i < p; ++i) acc = acc * s;
  return acc.trace();
}

std::vector<double> trace_power_values(const std::vector<Mat>& samples, int p) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const Mat& s : samples) out.push_back(trace_power(s, p));
  return out;
}

std::vector<HistogramSummary> trace_moments(const std::vector<Mat>& samples, const std::vector<int>& powers,
                                            int bins) {
  std::vector<HistogramSummary> out;
  for (int p : powers) out.push_back(histogram(trace_power_values(samples, p), bins, "tr_S" + std::to_string(p)));
  return out;
}

double standard_deviation(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  // Shifted by the first value so constant input gives exactly zero.
  const double shift = v.front();
  double mean = 0.0;
  for (double x : v) mean += x - shift;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - shift - mean) * (x - shift - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double tr3_concentration_check(const Mat& center, double y_std, int count, Rng& rng) {
  std::vector<double> values;
  values.reserve(count);
  for (int i = 0; i < count; ++i) values.push_back(trace_power(sample_wrapped_normal(center, y_std, rng), 3));
  return standard_deviation(values);
}

double wasserstein1_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1_1d needs non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  // Integrate |F_a - F_b| over the merged support.
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double prev = std::min(a.front(), b.front());
  double total = 0.0;
  while (i < a.size() || j < b.size()) {
    double next;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j]))
      next = a[i];
    else
      next = b[j];
    total += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - prev);
    while (i < a.size() && a[i] == next) ++i;
    while (j < b.size() && b[j] == next) ++j;
    prev = next;
  }
  return total;
}

FailureReport failure_report(const FailureCounter& forward, const FailureCounter& reverse) {
  return FailureReport{forward, reverse};
}

std::vector<HistogramSummary> dihedral_and_rmsd_stats(const std::vector<Vec>& samples,
                                                       const std::array<int, 4>& indices,
                                                       const std::vector<Vec>& references, int bins) {
  std::vector<HistogramSummary> out;
  std::vector<double> phi;
  phi.reserve(samples.size());
  for (const Vec& x : samples) phi.push_back(dihedral_angle(x, indices) * 180.0 / M_PI);
  out.push_back(histogram(phi, bins, "dihedral_deg", -180.0, 180.0));
  for (std::size_t r = 0; r < references.size(); ++r) {
    std::vector<double> d;
    d.reserve(samples.size());
    for (const Vec& x : samples) d.push_back(kabsch(x, references[r]).rmsd);
    out.push_back(histogram(d, bins, "rmsd_ref" + std::to_string(r)));
  }
  return out;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << std::setprecision(17);
  return f;
}

}  // namespace

void write_histogram_csv(const std::filesystem::path& path, const HistogramSummary& h) {
  auto f = open_out(path);
  f << "edge_lo,edge_hi,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b)
    f << h.edges[b] << ',' << h.edges[b + 1] << ',' << h.counts[b] << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

void write_nll_csv(const std::filesystem::path& path, const NllEstimate& est) {
  auto f = open_out(path);
  f << "point_index,nll,paths_used\n";
  for (std::size_t i = 0; i < est.per_point.size(); ++i) {
    f << i << ',';
    if (std::isnan(est.per_point[i]))
      f << "nan";
    else
      f << est.per_point[i];
    f << ',' << est.paths_used[i] << '\n';
  }
  if (!f) throw IoError("write failed: " + path.string());
}

void write_failures_csv(const std::filesystem::path& path, const FailureReport& report) {
  auto f = open_out(path);
  f << "chain,attempts,discarded,percent\n";
  f << "forward," << report.forward.attempts << ',' << report.forward.discarded << ','
    << report.forward_percent() << '\n';
  f << "reverse," << report.reverse.attempts << ',' << report.reverse.discarded << ','
    << report.reverse_percent() << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace rddpm
