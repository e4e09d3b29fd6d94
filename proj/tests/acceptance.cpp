// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Takes a little over a minute (one 60 s wall-clock run).

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "npc/npc.hpp"

namespace {

using namespace npc;

int g_failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] %2d %s: %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt("%.3g", x);
  return s;
}

std::vector<double> median_rss(const SweepResult& r) {
  std::vector<double> out;
  for (const auto& p : r.points) out.push_back(p.medianRss);
  return out;
}

SweepResult sweep(SweepParam p, std::vector<double> values, const ExperimentConfig& base = offline_defaults()) {
  SweepSpec spec;
  spec.param = p;
  spec.values = std::move(values);
  spec.repetitions = 5;
  spec.threads = 1;
  return run_sweep(base, spec);
}

void lqr_gain_check() {
  const GainVector K = lqr_gain({1.0, 0.5, 0.1});
  const bool ok = std::abs(K.k1 - 3.1623) <= 1e-3 && std::abs(K.k2 - 3.3652) <= 1e-3;
  report(1, "LQR gain", ok, fmt("K = (%.6f, %.6f), expected (3.1623, 3.3652) +-1e-3", K.k1, K.k2));
}

void degenerate_network() {
  ExperimentConfig c = offline_defaults();
  make_ideal_network(c);
  c.useEstimator = false;
  c.useOldControl = false;
  const TrajectoryLog net = run_offline(c);
  const TrajectoryLog ideal = run_ideal(c);
  double worst = 0.0;
  bool sameLength = net.ticks.size() == ideal.ticks.size();
  for (std::size_t i = 0; sameLength && i < net.ticks.size(); ++i) {
    worst = std::max({worst, std::abs(net.ticks[i].x1 - ideal.ticks[i].x1),
                      std::abs(net.ticks[i].x2 - ideal.ticks[i].x2)});
  }
  report(2, "Degenerate-network equivalence", sameLength && worst <= 1e-9,
         fmt("%zu ticks, max per-tick |x - x_ideal| = %.3g (limit 1e-9)", net.ticks.size(), worst));
}

void predictor_necessity() {
  const ExperimentConfig with = offline_defaults();
  ExperimentConfig without = with;
  without.usePredictor = false;
  const TrajectoryLog a = run_offline(with);
  const TrajectoryLog b = run_offline(without);
  const double ra = rss(a, with.warmupSkip).rss;
  const double rb = rss(b, with.warmupSkip).rss;
  const bool ok = !a.unstable && (b.diverged || b.unstable || rb > 100.0 * ra);
  report(3, "Predictor necessity", ok,
         fmt("with predictor rss %.3g stable=%d; without rss %.3g unstable=%d diverged=%d (ratio %.0fx)", ra,
             !a.unstable, rb, b.unstable, b.diverged, rb / ra));
}

void delay_sweep() {
  const std::vector<double> delays{50, 75, 100, 125, 150, 175, 200};
  const SweepResult r = sweep(SweepParam::BaseDelay, delays);
  const auto m = median_rss(r);
  int inversions = 0;
  bool small = true;
  for (std::size_t i = 0; i + 1 < m.size(); ++i) {
    if (m[i + 1] < m[i]) {
      ++inversions;
      small = small && (m[i] - m[i + 1]) < 0.1 * m[i];
    }
  }
  const bool ok = inversions <= 1 && small && m.back() > 2.0 * m.front();
  report(4, "Delay sweep monotonicity", ok,
         fmt("median rss over %s ms = [%s]; inversions %d; rss(200)/rss(50) = %.1f", list(delays).c_str(),
             list(m).c_str(), inversions, m.back() / m.front()));
}

void margin_tradeoff() {
  const std::vector<double> margins{2, 4, 8, 16, 32};
  const SweepResult r = sweep(SweepParam::DelayMargin, margins);
  const auto m = median_rss(r);
  std::vector<double> bw;
  for (const auto& p : r.points) bw.push_back(p.medianBandwidthBps);
  const LinearFit fit = linear_fit(margins, bw);
  bool nonIncreasing = true;
  for (std::size_t i = 0; i + 1 < m.size(); ++i) nonIncreasing = nonIncreasing && m[i + 1] <= m[i];
  const bool diminishing = (m[0] - m[1]) > (m[3] - m[4]);
  report(5, "Delay-margin trade-off", fit.r2 > 0.99 && nonIncreasing && diminishing,
         fmt("bandwidth [%s] bps, R^2 = %.6f; median rss [%s]; drop 2->4 %.3g vs 16->32 %.3g", list(bw).c_str(),
             fit.r2, list(m).c_str(), m[0] - m[1], m[3] - m[4]));
}

void loss_robustness() {
  ExperimentConfig base = offline_defaults();
  base.delayMargin = 16;
  const SweepResult r = sweep(SweepParam::LossProb, {0.0, 0.25}, base);
  int unstable = 0;
  std::vector<double> lossy;
  for (const auto& row : r.rows) {
    if (row.value == 0.25) {
      unstable += row.unstable ? 1 : 0;
      lossy.push_back(row.rss);
    }
  }
  const double m0 = r.points[0].medianRss;
  const double m25 = r.points[1].medianRss;
  report(6, "Loss robustness", unstable == 0 && m25 <= 10.0 * m0,
         fmt("25%% per direction (%.2f%% of cycles hit): rss per seed [%s], %d unstable; median %.3g vs "
             "zero-loss %.3g (%.2fx, limit 10x)",
             100.0 * bidirectional_loss_rate(0.25), list(lossy).c_str(), unstable, m25, m0, m25 / m0));
}

void estimator_tracking() {
  const ExperimentConfig on = offline_defaults();
  ExperimentConfig off = on;
  off.useEstimator = false;
  const TrajectoryLog a = run_offline(on);
  const TrajectoryLog b = run_offline(off);
  const PlantParams amp = drift_amplitudes(on.plant);
  double se[3] = {0, 0, 0};
  int n = 0;
  for (const auto& rec : a.controller) {
    if (rec.sampleTick.time(on.T()) < on.warmupSkip) continue;
    // The newest regression pair spans the step from sampleTick - 1.
    const PlantParams truth = true_params((rec.sampleTick - 1).time(on.T()), on.plant);
    se[0] += std::pow(rec.theta.theta1 - truth.theta1, 2);
    se[1] += std::pow(rec.theta.theta2 - truth.theta2, 2);
    se[2] += std::pow(rec.theta.theta3 - truth.theta3, 2);
    ++n;
  }
  const double ampv[3] = {amp.theta1, amp.theta2, amp.theta3};
  double ratio[3];
  bool ok = n > 0;
  for (int i = 0; i < 3; ++i) {
    ratio[i] = std::sqrt(se[i] / std::max(n, 1)) / ampv[i];
    ok = ok && ratio[i] <= 0.5;
  }
  const double ra = rss(a, on.warmupSkip).rss;
  const double rb = rss(b, on.warmupSkip).rss;
  ok = ok && ra < rb;
  report(7, "Estimator tracking", ok,
         fmt("RMS error / drift amplitude = (%.3f, %.3f, %.3f), limit 0.5; rss estimator on %.3g < off %.3g",
             ratio[0], ratio[1], ratio[2], ra, rb));
}

void estimator_oracle() {
  const double T = kDefaultSamplePeriod;
  const PlantParams truth{0.995, 0.0082, 0.0005};
  const int n = 500;
  Eigen::MatrixXd Phi(n, 3);
  Eigen::VectorXd y(n);
  EstimatorState rls = EstimatorState::initial(T);
  const TrendEstimatorConfig tcfg;
  TrendEstimatorState trend = TrendEstimatorState::initial(T, tcfg);
  double x2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double t = k * T;
    const double u = std::sin(2 * std::numbers::pi * 0.7 * t) + 0.5 * std::sin(2 * std::numbers::pi * 3.1 * t + 1.0) +
                     0.3 * std::cos(2 * std::numbers::pi * 11.0 * t);
    const double next = truth.theta1 * x2 + truth.theta2 * u + truth.theta3;
    Phi.row(k) << x2, u, 1.0;
    y(k) = next;
    rls = estimator_update(rls, x2, u, next);
    trend = trend_update(std::move(trend), k, x2, u, next, T, tcfg);
    x2 = next;
  }
  const Eigen::Vector3d oracle = Phi.colPivHouseholderQr().solve(y);
  const double eRls = (to_vector(rls.theta) - oracle).cwiseAbs().maxCoeff();
  const double eTrend = (to_vector(trend.theta()) - oracle).cwiseAbs().maxCoeff();
  report(8, "Estimator convergence oracle", eRls <= 1e-6 && eTrend <= 1e-6,
         fmt("max |theta - batch LS| after 500 samples: RLS %.3g, trend filter %.3g (limit 1e-6)", eRls, eTrend));
}

void delay_normalization() {
  SeededRng seeds = derive_stream(2024, "acceptance-delay-seeds");
  double lo = 1e9, hi = 0.0;
  const double dev = 0.05;
  const int points = 200000;
  const double span = 60.0;
  for (int s = 0; s < 20; ++s) {
    const DelayFunction d({0.125, dev, 0.4, 20, seeds.next_u64()});
    double peak = 0.0;
    for (int i = 0; i <= points; ++i) peak = std::max(peak, std::abs(d(span * i / points) - 0.125));
    lo = std::min(lo, peak / dev);
    hi = std::max(hi, peak / dev);
  }
  report(9, "Delay-function normalization", lo >= 0.98 && hi <= 1.02,
         fmt("20 seeds, n=20, max |d - a0| / dev over 60 s in [%.4f, %.4f] (limit [0.98, 1.02])", lo, hi));
}

void realtime_parity() {
  const ExperimentConfig rtCfg = realtime_defaults();
  const rt::RealtimeResult res = rt::run_realtime(rtCfg);
  const RunSummary s = summarize(res.log, rtCfg.warmupSkip);
  const ExperimentConfig offCfg = offline_defaults();
  const double off = rss(run_offline(offCfg), offCfg.warmupSkip).rss;
  const bool ok = s.rss <= 3.0 * off && s.medianSrtt >= 0.25 && s.medianSrtt <= 0.30 && !res.log.unstable;
  report(10, "Real-time parity", ok,
         fmt("real-time rss %.3g vs offline %.3g (%.2fx, limit 3x); median srtt %.4f s (limit [0.25, 0.30])", s.rss,
             off, s.rss / off, s.medianSrtt));
  const double missed = static_cast<double>(res.log.missedDeadlines) / static_cast<double>(res.log.ticks.size());
  std::printf("       real-time run: %zu ticks, %llu missed deadlines (%.3f%%, validity bound 0.1%%%s), relay "
              "max release lateness %.2f ms, observed loss %.4f\n",
              res.log.ticks.size(), static_cast<unsigned long long>(res.log.missedDeadlines), 100.0 * missed,
              missed < 1e-3 ? "" : " EXCEEDED", res.relay.maxLateness * 1e3, s.lossObserved);
}

void determinism() {
  const ExperimentConfig c = offline_defaults();
  auto csv = [&] {
    std::ostringstream os;
    io::write_trajectory_csv(os, run_offline(c));
    return os.str();
  };
  const std::string a = csv();
  const std::string b = csv();
  report(11, "Determinism", a == b, fmt("trajectory CSVs %zu and %zu bytes, identical=%d", a.size(), b.size(), a == b));
}

}  // namespace

int main() {
  try {
    lqr_gain_check();
    degenerate_network();
    predictor_necessity();
    delay_sweep();
    margin_tradeoff();
    loss_robustness();
    estimator_tracking();
    estimator_oracle();
    delay_normalization();
    realtime_parity();
    determinism();
  } catch (const std::exception& e) {
    std::printf("[FAIL] acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d of 11 criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
