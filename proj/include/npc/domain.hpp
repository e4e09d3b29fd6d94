#pragma once

// Shared value types for the networked predictive control loop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace npc {

/// Raised for invalid configuration values.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kDefaultSamplePeriod = 0.008;
inline constexpr double kDivergenceLimit = 1e6;

/// Plant sample index. Wall time is always recomputed from the index so it
/// never accumulates floating point drift.
struct Tick {
  std::int64_t k = 0;

  constexpr double time(double period) const { return static_cast<double>(k) * period; }

  friend constexpr auto operator<=>(const Tick&, const Tick&) = default;
  constexpr Tick operator+(std::int64_t n) const { return Tick{k + n}; }
  constexpr Tick operator-(std::int64_t n) const { return Tick{k - n}; }
  constexpr std::int64_t operator-(Tick other) const { return k - other.k; }
};

/// Position / velocity of the single controlled axis.
struct PlantState {
  double x1 = 0.0;  // m
  double x2 = 0.0;  // m/s

  bool finite() const { return std::isfinite(x1) && std::isfinite(x2); }
  bool diverged() const { return !finite() || std::abs(x1) >= kDivergenceLimit; }
  friend bool operator==(const PlantState&, const PlantState&) = default;
};

/// Acceleration command in m/s^2.
using ControlValue = double;

/// Discrete model x2' = theta1 * x2 + theta2 * u + theta3.
struct PlantParams {
  double theta1 = 1.0;                   // velocity retention
  double theta2 = kDefaultSamplePeriod;  // input gain (s)
  double theta3 = 0.0;                   // constant disturbance (m/s per step)

  static constexpr PlantParams nominal(double period) { return {1.0, period, 0.0}; }

  /// Projects onto the admissible box theta1 in (0, 2), theta2 > 0.
  PlantParams clamped() const {
    constexpr double eps = 1e-9;
    PlantParams p = *this;
    p.theta1 = std::clamp(p.theta1, eps, 2.0 - eps);
    p.theta2 = std::max(p.theta2, eps);
    return p;
  }

  friend bool operator==(const PlantParams&, const PlantParams&) = default;
};

/// Sent by the plant every tick.
struct StatePacket {
  std::uint32_t seq = 0;
  Tick sampleTick{};
  double y1 = 0.0;
  double y2 = 0.0;
  std::uint32_t echoSeq = 0;  // 0: no control packet received yet
  double echoHoldTime = 0.0;  // s the echoed packet has dwelt at the plant

  friend bool operator==(const StatePacket&, const StatePacket&) = default;
};

/// Control values for consecutive ticks starting at startTick.
struct ControlSequence {
  Tick startTick{};
  std::vector<ControlValue> values;

  Tick endTick() const { return startTick + static_cast<std::int64_t>(values.size()); }
  bool covers(Tick t) const { return t >= startTick && t < endTick(); }

  friend bool operator==(const ControlSequence&, const ControlSequence&) = default;
};

struct ControlPacket {
  std::uint32_t seq = 0;
  std::uint32_t basedOnStateSeq = 0;
  ControlSequence sequence;
  Tick sendTick{};

  friend bool operator==(const ControlPacket&, const ControlPacket&) = default;
};

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

/// Deterministic random stream. The engine (mt19937_64) is fully specified
/// by the standard; uniform and Gaussian conversions are done here rather
/// than through <random> distributions, whose output is implementation
/// defined.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::string label)
      : seed_(seed),
        label_(std::move(label)),
        engine_(detail::splitmix64(detail::splitmix64(seed) ^ detail::fnv1a(label_))) {}

  std::uint64_t seed() const { return seed_; }
  const std::string& label() const { return label_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal draw, Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0, v = 0.0, s = 0.0;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

 private:
  std::uint64_t seed_;
  std::string label_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// One independent stream per consumer, keyed by label.
inline SeededRng derive_stream(std::uint64_t seed, std::string_view label) {
  if (label.empty()) throw ConfigError("derive_stream: empty stream label");
  return SeededRng(seed, std::string(label));
}

namespace streams {
inline constexpr std::string_view kNoise = "noise";
inline constexpr std::string_view kLossForward = "loss-forward";
inline constexpr std::string_view kLossFeedback = "loss-feedback";
inline constexpr std::string_view kDelayPhasesForward = "delay-phases-forward";
inline constexpr std::string_view kDelayPhasesFeedback = "delay-phases-feedback";
inline constexpr std::string_view kDynamics = "dynamics";
}  // namespace streams

/// Sub-seed for repetition `rep` of a sweep or batch.
inline std::uint64_t sub_seed(std::uint64_t master, std::uint64_t rep) {
  return detail::splitmix64(master * 0x9E3779B97F4A7C15ULL + rep + 1);
}

}  // namespace npc
