#pragma once

// Scoring, bandwidth accounting and parameter sweeps.

#include <algorithm>
#include <cmath>
#include <atomic>
#include <cstdint>
#include <future>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "npc/experiment.hpp"
#include "npc/offline.hpp"

namespace npc {

struct RssScore {
  double rss = 0.0;  // m^2 (or m^2/s when time-normalized)
  std::size_t samplesUsed = 0;
};

/// Mean squared position deviation from the ideal run, ticks before the
/// warmup excluded. A diverged log scores +inf.
inline RssScore rss(const TrajectoryLog& log, double warmupSkip, bool perSecond = false) {
  const auto skip = std::llround(warmupSkip / log.T);
  if (log.diverged) {
    const auto expected = std::llround(log.duration / log.T) - skip;
    return {std::numeric_limits<double>::infinity(), static_cast<std::size_t>(std::max<long long>(expected, 0))};
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : log.ticks) {
    if (r.k < skip) continue;
    const double d = r.x1Ideal - r.x1;
    sum += d * d;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("rss: no samples after warmup");
  double score = sum / static_cast<double>(n);
  if (perSecond) score /= log.T;
  return {score, n};
}

/// Bits per second sent in `dir`, headers included.
inline double bandwidth(const TrajectoryLog& log, Direction dir) {
  if (log.packets.empty()) throw std::invalid_argument("bandwidth: empty packet log");
  std::uint64_t bytes = 0;
  for (const auto& p : log.packets) {
    if (p.direction == dir) bytes += p.sizeBytes;
  }
  return static_cast<double>(bytes) * 8.0 / log.duration;
}

inline double observed_loss(const TrajectoryLog& log) {
  std::size_t lost = 0;
  std::size_t settled = 0;
  for (const auto& p : log.packets) {
    if (p.inFlight) continue;
    ++settled;
    if (!p.arrival) ++lost;
  }
  return settled ? static_cast<double>(lost) / static_cast<double>(settled) : 0.0;
}

struct RunSummary {
  double rss = 0.0;
  double bandwidthBps = 0.0;  // controller -> plant
  double feedbackBandwidthBps = 0.0;
  double lossObserved = 0.0;
  bool unstable = false;
  double medianSrtt = kNaN;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const auto m = v.size() / 2;
  return v.size() % 2 ? v[m] : (v[m - 1] + v[m]) / 2.0;
}

inline RunSummary summarize(const TrajectoryLog& log, double warmupSkip) {
  RunSummary s;
  s.rss = rss(log, warmupSkip).rss;
  s.bandwidthBps = bandwidth(log, Direction::Forward);
  s.feedbackBandwidthBps = bandwidth(log, Direction::Feedback);
  s.lossObserved = observed_loss(log);
  s.unstable = log.unstable;
  std::vector<double> srtts;
  for (const auto& c : log.controller) {
    if (c.time >= warmupSkip && std::isfinite(c.srtt)) srtts.push_back(c.srtt);
  }
  s.medianSrtt = median(std::move(srtts));
  return s;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepParam { BaseDelay, DelayMargin, LossProb };

inline SweepParam parse_sweep_param(const std::string& s) {
  if (s == "baseDelay") return SweepParam::BaseDelay;
  if (s == "delayMargin") return SweepParam::DelayMargin;
  if (s == "lossProb") return SweepParam::LossProb;
  throw ConfigError("sweep: unknown parameter '" + s + "' (baseDelay, delayMargin, lossProb)");
}

inline const char* to_string(SweepParam p) {
  switch (p) {
    case SweepParam::BaseDelay: return "baseDelay";
    case SweepParam::DelayMargin: return "delayMargin";
    case SweepParam::LossProb: return "lossProb";
  }
  return "?";
}

/// baseDelay values are milliseconds per leg; deviation scales with the base
/// delay at the base config's ratio. lossProb values are probabilities per leg.
struct SweepSpec {
  SweepParam param = SweepParam::BaseDelay;
  std::vector<double> values;
  int repetitions = 5;
  unsigned threads = 0;  // 0: hardware concurrency
};

struct SweepRow {
  double value = 0.0;
  int rep = 0;
  double rss = 0.0;
  double bandwidthBps = 0.0;
  bool unstable = false;
};

struct SweepPoint {
  double value = 0.0;
  double medianRss = 0.0;
  double medianBandwidthBps = 0.0;
  int unstableRuns = 0;
};

struct SweepResult {
  SweepSpec spec;
  std::vector<SweepRow> rows;  // value-major, then rep
  std::vector<SweepPoint> points;
};

inline ExperimentConfig apply_sweep_value(ExperimentConfig cfg, SweepParam p, double v) {
  switch (p) {
    case SweepParam::BaseDelay:
      cfg.set_both_channels([v](ChannelConfig& ch) {
        const double a0 = v / 1000.0;
        const double ratio = ch.delay.a0 > 0.0 ? ch.delay.dev / ch.delay.a0 : 0.0;
        ch.delay.a0 = a0;
        ch.delay.dev = a0 * ratio;
      });
      break;
    case SweepParam::DelayMargin:
      cfg.delayMargin = static_cast<int>(std::lround(v));
      cfg.horizon = std::max(cfg.horizon, cfg.delayMargin);
      break;
    case SweepParam::LossProb:
      cfg.set_both_channels([v](ChannelConfig& ch) { ch.lossProb = v; });
      break;
  }
  return cfg;
}

/// Repetition r of every value shares the sub-seed derived from
/// (masterSeed, r), so values are compared under common random numbers.
inline SweepResult run_sweep(const ExperimentConfig& base, const SweepSpec& spec) {
  if (spec.values.empty()) throw ConfigError("sweep: no values");
  if (spec.repetitions < 1) throw ConfigError("sweep: repetitions must be positive");

  struct Job {
    double value;
    int rep;
    ExperimentConfig cfg;
  };
  std::vector<Job> jobs;
  for (double v : spec.values) {
    for (int r = 0; r < spec.repetitions; ++r) {
      ExperimentConfig cfg = apply_sweep_value(base, spec.param, v);
      cfg.masterSeed = sub_seed(base.masterSeed, static_cast<std::uint64_t>(r));
      cfg.validate();
      jobs.push_back({v, r, std::move(cfg)});
    }
  }

  SweepResult result;
  result.spec = spec;
  result.rows.resize(jobs.size());
  auto runOne = [&](std::size_t i) {
    const Job& j = jobs[i];
    const TrajectoryLog log = run_offline(j.cfg);
    const RunSummary s = summarize(log, j.cfg.warmupSkip);
    result.rows[i] = {j.value, j.rep, s.rss, s.bandwidthBps, s.unstable};
  };

  unsigned threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(jobs.size()));
  if (threads <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) runOne(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::future<void>> workers;
    for (unsigned w = 0; w < threads; ++w) {
      workers.push_back(std::async(std::launch::async, [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) runOne(i);
      }));
    }
    for (auto& f : workers) f.get();
  }

  for (std::size_t vi = 0; vi < spec.values.size(); ++vi) {
    std::vector<double> r, b;
    SweepPoint pt;
    pt.value = spec.values[vi];
    for (int rep = 0; rep < spec.repetitions; ++rep) {
      const auto& row = result.rows[vi * static_cast<std::size_t>(spec.repetitions) + static_cast<std::size_t>(rep)];
      r.push_back(row.rss);
      b.push_back(row.bandwidthBps);
      pt.unstableRuns += row.unstable ? 1 : 0;
    }
    pt.medianRss = median(std::move(r));
    pt.medianBandwidthBps = median(std::move(b));
    result.points.push_back(pt);
  }
  return result;
}

/// Ordinary least squares y = a + b x and its coefficient of determination.
struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
};

inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("linear_fit: need >= 2 points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  LinearFit f;
  f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  f.intercept = (sy - f.slope * sx) / n;
  const double mean = sy / n;
  double ssRes = 0, ssTot = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    ssRes += e * e;
    ssTot += (y[i] - mean) * (y[i] - mean);
  }
  f.r2 = ssTot > 0.0 ? 1.0 - ssRes / ssTot : 1.0;
  return f;
}

}  // namespace npc
