#pragma once

// Network impairment model: seeded sum-of-sines delay, Bernoulli loss and
// serialization delay at a fixed link capacity.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "npc/domain.hpp"

namespace npc {

struct DelayFnConfig {
  double a0 = 0.125;  // base delay (s)
  double dev = 0.05;  // max deviation from a0 (s)
  double f0 = 0.4;    // base frequency (Hz)
  int n = 20;         // number of sub-frequencies
  std::uint64_t seed = 0;

  void validate() const {
    if (dev < 0.0) throw ConfigError("delay: deviation must be non-negative");
    if (dev > 0.0 && !(a0 > dev)) throw ConfigError("delay: base delay must exceed deviation");
    if (a0 < 0.0) throw ConfigError("delay: base delay must be non-negative");
    if (n < 1) throw ConfigError("delay: need at least one sub-frequency");
    if (!(f0 > 0.0)) throw ConfigError("delay: base frequency must be positive");
  }
};

struct ChannelConfig {
  DelayFnConfig delay;
  double lossProb = 0.0;
  double capacityBps = 25e6;  // 0 = unlimited

  void validate() const {
    delay.validate();
    if (lossProb < 0.0 || lossProb > 1.0) throw ConfigError("channel: loss must lie in [0, 1]");
    if (capacityBps < 0.0) throw ConfigError("channel: capacity must be non-negative");
  }
};

inline constexpr double kSubFrequencyRatio = 1.2;
inline constexpr int kNormalizationPeriods = 5;
inline constexpr int kNormalizationPointsPerPeriod = 20000;

/// Unnormalized sum  sum_i sin(1.2^i * f0 * 2pi * t + phi_i) / 1.2^i.
inline double sine_sum(double f0, std::span<const double> phases, double t) {
  double s = 0.0;
  double scale = 1.0;
  for (double phi : phases) {
    s += std::sin(scale * f0 * 2.0 * std::numbers::pi * t + phi) / scale;
    scale *= kSubFrequencyRatio;
  }
  return s;
}

/// c = dev / max|sum| with the maximum taken on a dense grid over five base
/// periods.
inline double normalize_c(const DelayFnConfig& cfg, std::span<const double> phases) {
  if (cfg.dev == 0.0) return 0.0;
  const int points = kNormalizationPeriods * kNormalizationPointsPerPeriod;
  const double span = kNormalizationPeriods / cfg.f0;
  double peak = 0.0;
  for (int i = 0; i <= points; ++i) {
    const double t = span * static_cast<double>(i) / points;
    peak = std::max(peak, std::abs(sine_sum(cfg.f0, phases, t)));
  }
  return cfg.dev / peak;
}

inline std::vector<double> draw_phases(const DelayFnConfig& cfg, std::string_view label) {
  SeededRng rng = derive_stream(cfg.seed, label);
  std::vector<double> phases(static_cast<std::size_t>(cfg.n));
  for (auto& p : phases) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return phases;
}

/// d(t) = a0 + c * sine_sum(t). Phases and c are fixed at construction.
class DelayFunction {
 public:
  explicit DelayFunction(const DelayFnConfig& cfg,
                         std::string_view label = streams::kDelayPhasesForward)
      : DelayFunction(cfg, draw_phases(cfg, label)) {}

  DelayFunction(const DelayFnConfig& cfg, std::vector<double> phases)
      : cfg_(cfg), phases_(std::move(phases)) {
    cfg_.validate();
    c_ = normalize_c(cfg_, phases_);
  }

  /// Clamped to [a0 - dev, a0 + dev] so the bound also holds outside the
  /// normalization window.
  double operator()(double t) const {
    if (c_ == 0.0) return cfg_.a0;
    const double d = cfg_.a0 + c_ * sine_sum(cfg_.f0, phases_, t);
    return std::clamp(d, cfg_.a0 - cfg_.dev, cfg_.a0 + cfg_.dev);
  }

  double c() const { return c_; }
  const std::vector<double>& phases() const { return phases_; }
  const DelayFnConfig& config() const { return cfg_; }

 private:
  DelayFnConfig cfg_;
  std::vector<double> phases_;
  double c_ = 0.0;
};

/// One direction of the link. Owns its loss stream; not thread safe.
class Channel {
 public:
  Channel(const ChannelConfig& cfg, std::string_view phaseLabel, SeededRng lossRng)
      : cfg_(cfg), delay_(cfg.delay, phaseLabel), loss_(std::move(lossRng)) {
    cfg_.validate();
  }

  /// Arrival time, or nullopt if the packet is lost. Exactly one loss draw
  /// per packet. Arrivals may reorder.
  std::optional<double> transmit(std::size_t bytes, double sendTime) {
    const bool lost = loss_.uniform() < cfg_.lossProb;
    if (lost) return std::nullopt;
    return sendTime + delay_(sendTime) + serialization_delay(bytes);
  }

  double serialization_delay(std::size_t bytes) const {
    return cfg_.capacityBps > 0.0 ? static_cast<double>(bytes) * 8.0 / cfg_.capacityBps : 0.0;
  }

  const DelayFunction& delay() const { return delay_; }
  const ChannelConfig& config() const { return cfg_; }

 private:
  ChannelConfig cfg_;
  DelayFunction delay_;
  SeededRng loss_;
};

/// Probability that a control cycle loses at least one of its two legs.
inline double bidirectional_loss_rate(double p) {
  if (p < 0.0 || p > 1.0) throw ConfigError("loss probability must lie in [0, 1]");
  return 1.0 - (1.0 - p) * (1.0 - p);
}

}  // namespace npc
